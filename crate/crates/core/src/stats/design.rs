//! Treatment-coded fixed-effect design for binomial trials, aggregated into
//! (group, covariate pattern) cells.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::corpus::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Factor {
    Model,
    Bloom,
    Domain,
}

impl Factor {
    pub fn level_of(self, trial: &TrialRecord) -> String {
        match self {
            Factor::Model => trial.model_id.clone(),
            Factor::Bloom => trial.bloom.as_str().to_string(),
            Factor::Domain => trial.domain.as_str().to_string(),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Factor::Model => "Model",
            Factor::Bloom => "Bloom",
            Factor::Domain => "Domain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Main(Factor),
    Interaction(Factor, Factor),
}

/// Field the random intercept is keyed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupingKey {
    Practice,
    DomainPractice,
    ModelPractice,
}

impl GroupingKey {
    pub fn group_for(self, model: &str, domain: &str, practice: &str) -> String {
        match self {
            GroupingKey::Practice => practice.to_string(),
            GroupingKey::DomainPractice => format!("{domain}:{practice}"),
            GroupingKey::ModelPractice => format!("{model}:{practice}"),
        }
    }

    pub fn group_of(self, trial: &TrialRecord) -> String {
        self.group_for(&trial.model_id, trial.domain.as_str(), &trial.practice_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub terms: Vec<Term>,
    /// Missing entries default to the alphabetically first observed level.
    pub reference_levels: BTreeMap<Factor, String>,
    pub grouping: GroupingKey,
}

impl ModelSpec {
    /// `Model + Bloom + (1 | Practice)`.
    pub fn model_bloom() -> Self {
        Self {
            terms: vec![Term::Main(Factor::Model), Term::Main(Factor::Bloom)],
            reference_levels: BTreeMap::new(),
            grouping: GroupingKey::Practice,
        }
    }

    /// `Domain + Model + Bloom + (1 | Domain:Practice)`.
    pub fn pooled_main_effects() -> Self {
        Self {
            terms: vec![
                Term::Main(Factor::Domain),
                Term::Main(Factor::Model),
                Term::Main(Factor::Bloom),
            ],
            reference_levels: BTreeMap::new(),
            grouping: GroupingKey::DomainPractice,
        }
    }

    /// Pooled main effects plus `Model:Domain`.
    pub fn pooled_with_model_domain() -> Self {
        let mut spec = Self::pooled_main_effects();
        spec.terms.push(Term::Interaction(Factor::Model, Factor::Domain));
        spec
    }

    pub fn with_reference(mut self, factor: Factor, level: impl Into<String>) -> Self {
        self.reference_levels.insert(factor, level.into());
        self
    }

    pub fn with_grouping(mut self, grouping: GroupingKey) -> Self {
        self.grouping = grouping;
        self
    }

    pub fn factors(&self) -> BTreeSet<Factor> {
        let mut out = BTreeSet::new();
        for t in &self.terms {
            match *t {
                Term::Main(f) => {
                    out.insert(f);
                }
                Term::Interaction(a, b) => {
                    out.insert(a);
                    out.insert(b);
                }
            }
        }
        out
    }
}

/// Column layout resolved against observed levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coding {
    pub spec: ModelSpec,
    /// Observed levels per factor, reference first.
    pub levels: BTreeMap<Factor, Vec<String>>,
    pub columns: Vec<String>,
}

impl Coding {
    pub fn new(trials: &[TrialRecord], spec: &ModelSpec) -> Result<Self, StatsError> {
        let mut levels = BTreeMap::new();
        let mut spec = spec.clone();
        for factor in spec.factors() {
            let observed: BTreeSet<String> = trials.iter().map(|t| factor.level_of(t)).collect();
            if observed.len() < 2 {
                return Err(StatsError::TooFewLevels {
                    factor: factor.to_string(),
                    found: observed.len(),
                });
            }
            let reference = match spec.reference_levels.get(&factor) {
                Some(r) => {
                    if !observed.contains(r) {
                        return Err(StatsError::UnknownLevel {
                            factor: factor.to_string(),
                            level: r.clone(),
                        });
                    }
                    r.clone()
                }
                None => observed.iter().next().cloned().expect("two or more levels"),
            };
            spec.reference_levels.insert(factor, reference.clone());
            let mut ordered = vec![reference.clone()];
            ordered.extend(observed.into_iter().filter(|l| *l != reference));
            levels.insert(factor, ordered);
        }
        let mut columns = vec!["(Intercept)".to_string()];
        for term in &spec.terms {
            match *term {
                Term::Main(f) => {
                    for level in &levels[&f][1..] {
                        columns.push(format!("{f}[{level}]"));
                    }
                }
                Term::Interaction(a, b) => {
                    for la in &levels[&a][1..] {
                        for lb in &levels[&b][1..] {
                            columns.push(format!("{a}[{la}]:{b}[{lb}]"));
                        }
                    }
                }
            }
        }
        Ok(Self {
            spec,
            levels,
            columns,
        })
    }

    pub fn reference(&self, factor: Factor) -> &str {
        &self.levels[&factor][0]
    }

    /// Active (value 1) columns for a level assignment. Column 0 is always on.
    pub fn active_columns(&self, assignment: &BTreeMap<Factor, String>) -> Result<Vec<usize>, StatsError> {
        let mut position = BTreeMap::new();
        for (factor, levels) in &self.levels {
            let level = assignment.get(factor).ok_or_else(|| StatsError::UnknownLevel {
                factor: factor.to_string(),
                level: "<missing>".into(),
            })?;
            let idx = levels.iter().position(|l| l == level).ok_or_else(|| StatsError::UnknownLevel {
                factor: factor.to_string(),
                level: level.clone(),
            })?;
            position.insert(*factor, idx);
        }
        let mut cols = vec![0];
        let mut offset = 1;
        for term in &self.spec.terms {
            match *term {
                Term::Main(f) => {
                    let n = self.levels[&f].len() - 1;
                    if position[&f] > 0 {
                        cols.push(offset + position[&f] - 1);
                    }
                    offset += n;
                }
                Term::Interaction(a, b) => {
                    let na = self.levels[&a].len() - 1;
                    let nb = self.levels[&b].len() - 1;
                    if position[&a] > 0 && position[&b] > 0 {
                        cols.push(offset + (position[&a] - 1) * nb + (position[&b] - 1));
                    }
                    offset += na * nb;
                }
            }
        }
        Ok(cols)
    }

    pub fn assignment_of(&self, trial: &TrialRecord) -> BTreeMap<Factor, String> {
        self.levels.keys().map(|f| (*f, f.level_of(trial))).collect()
    }
}

/// Binomial cell: all trials sharing a group and covariate pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub group: usize,
    pub cols: Vec<usize>,
    pub successes: f64,
    pub trials: f64,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub coding: Coding,
    pub groups: Vec<String>,
    /// Sorted by group, then by covariate pattern.
    pub cells: Vec<Cell>,
    pub group_ranges: Vec<Range<usize>>,
    pub n_obs: usize,
}

impl Design {
    pub fn build(trials: &[TrialRecord], spec: &ModelSpec) -> Result<Self, StatsError> {
        if trials.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        let coding = Coding::new(trials, spec)?;
        let mut agg: BTreeMap<(String, Vec<usize>), (f64, f64)> = BTreeMap::new();
        for t in trials {
            let cols = coding.active_columns(&coding.assignment_of(t))?;
            let group = spec.grouping.group_of(t);
            let entry = agg.entry((group, cols)).or_insert((0.0, 0.0));
            entry.0 += if t.correct { 1.0 } else { 0.0 };
            entry.1 += 1.0;
        }
        let mut groups: Vec<String> = Vec::new();
        let mut cells = Vec::with_capacity(agg.len());
        let mut group_ranges: Vec<Range<usize>> = Vec::new();
        for ((group, cols), (s, n)) in agg {
            if groups.last() != Some(&group) {
                if let Some(last) = group_ranges.last_mut() {
                    last.end = cells.len();
                }
                group_ranges.push(cells.len()..cells.len());
                groups.push(group);
            }
            cells.push(Cell {
                group: groups.len() - 1,
                cols,
                successes: s,
                trials: n,
            });
        }
        if let Some(last) = group_ranges.last_mut() {
            last.end = cells.len();
        }
        Ok(Self {
            coding,
            groups,
            cells,
            group_ranges,
            n_obs: trials.len(),
        })
    }

    pub fn n_fixed(&self) -> usize {
        self.coding.columns.len()
    }

    pub fn eta(&self, cell: &Cell, beta: &[f64]) -> f64 {
        cell.cols.iter().map(|&j| beta[j]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Bloom, Domain};

    fn trial(model: &str, bloom: Bloom, domain: Domain, practice: &str, correct: bool) -> TrialRecord {
        TrialRecord {
            model_id: model.into(),
            mcq_id: format!("{practice}-{}", bloom.as_str()),
            scenario_id: "s".into(),
            practice_id: practice.into(),
            bloom,
            domain,
            chosen_label: Some(if correct { 'A' } else { 'B' }),
            correct_label: 'A',
            correct,
            raw_response: String::new(),
            error: None,
        }
    }

    #[test]
    fn treatment_coding_columns() {
        let mut trials = Vec::new();
        for m in ["m1", "m2", "m3"] {
            for d in [Domain::Teaching, Domain::Diet] {
                for b in Bloom::ALL {
                    trials.push(trial(m, b, d.clone(), "p1", true));
                    trials.push(trial(m, b, d.clone(), "p2", false));
                }
            }
        }
        let spec = ModelSpec::pooled_with_model_domain();
        let design = Design::build(&trials, &spec).unwrap();
        // 1 + (2-1) + (3-1) + (4-1) + 2*1
        assert_eq!(design.n_fixed(), 9);
        assert_eq!(design.coding.reference(Factor::Bloom), "analyze");
        assert_eq!(design.coding.reference(Factor::Model), "m1");
        assert_eq!(design.groups.len(), 4);
        let total: f64 = design.cells.iter().map(|c| c.trials).sum();
        assert_eq!(total as usize, trials.len());
        let a: BTreeMap<Factor, String> = [
            (Factor::Model, "m3".to_string()),
            (Factor::Bloom, "apply".to_string()),
            (Factor::Domain, "teaching".to_string()),
        ]
        .into();
        let cols = design.coding.active_columns(&a).unwrap();
        let names: Vec<&str> = cols.iter().map(|&c| design.coding.columns[c].as_str()).collect();
        assert_eq!(
            names,
            vec![
                "(Intercept)",
                "Domain[teaching]",
                "Model[m3]",
                "Bloom[apply]",
                "Model[m3]:Domain[teaching]"
            ]
        );
    }

    #[test]
    fn single_level_factor_rejected() {
        let trials = vec![
            trial("m1", Bloom::Apply, Domain::Diet, "p", true),
            trial("m1", Bloom::Analyze, Domain::Diet, "p", false),
        ];
        let err = Design::build(&trials, &ModelSpec::model_bloom()).unwrap_err();
        assert!(matches!(err, StatsError::TooFewLevels { .. }));
    }

    #[test]
    fn reference_must_be_observed() {
        let trials = vec![
            trial("m1", Bloom::Apply, Domain::Diet, "p", true),
            trial("m2", Bloom::Analyze, Domain::Diet, "p", false),
        ];
        let spec = ModelSpec::model_bloom().with_reference(Factor::Model, "nope");
        assert!(matches!(
            Design::build(&trials, &spec).unwrap_err(),
            StatsError::UnknownLevel { .. }
        ));
    }
}
