//! Tabular and plot renderings of exam results and screening output.
//! Column order and rounding are fixed so outputs diff cleanly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{Bloom, TrialRecord};
use crate::stats::bhpr::RateMatrix;
use crate::stats::{BhprResult, CellStatus, GlmmFit, LrtResult, ResidualReport, ScreeningReport};

/// Six significant digits, scientific outside a readable range.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=9).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn acc3(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn csv_string<F>(header: &[&str], fill: F) -> String
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    fill(&mut w).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub model_id: String,
    /// remember, understand, apply, analyze
    pub cells: [Option<f64>; 4],
    pub counts: [(usize, usize); 4],
    /// Mean of the defined Bloom cells.
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let mut tally: BTreeMap<&str, [(usize, usize); 4]> = BTreeMap::new();
        for t in trials {
            let c = &mut tally.entry(&t.model_id).or_default()[t.bloom.rank()];
            c.0 += usize::from(t.correct);
            c.1 += 1;
        }
        let rows = tally
            .into_iter()
            .map(|(m, counts)| {
                let cells = counts.map(|(c, n)| (n > 0).then(|| c as f64 / n as f64));
                let defined: Vec<f64> = cells.iter().flatten().copied().collect();
                let average = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
                AccuracyRow {
                    model_id: m.to_string(),
                    cells,
                    counts,
                    average,
                }
            })
            .collect();
        Self { rows }
    }

    /// Column maxima (after rounding) for the four Bloom columns and the average.
    fn column_max(&self) -> [Option<String>; 5] {
        let mut out: [Option<String>; 5] = Default::default();
        for (col, slot) in out.iter_mut().enumerate() {
            *slot = self
                .rows
                .iter()
                .filter_map(|r| if col < 4 { r.cells[col] } else { r.average })
                .map(|v| format!("{v:.3}"))
                .max_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut header = vec!["model"];
        header.extend(Bloom::ALL.iter().map(|b| b.as_str()));
        header.push("avg_across_bloom");
        csv_string(&header, |w| {
            for r in &self.rows {
                let mut rec = vec![r.model_id.clone()];
                rec.extend(r.cells.iter().map(|c| acc3(*c)));
                rec.push(acc3(r.average));
                w.write_record(&rec)?;
            }
            Ok(())
        })
    }

    /// Markdown table; the best value in each column is bold.
    pub fn to_markdown(&self) -> String {
        let max = self.column_max();
        let mut s = String::from("| Model |");
        for b in Bloom::ALL {
            let _ = write!(s, " {} |", b.title());
        }
        s.push_str(" Avg. across Bloom |\n|---|---:|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = write!(s, "| {} |", r.model_id);
            for (col, v) in r.cells.iter().copied().chain([r.average]).enumerate() {
                let txt = acc3(v);
                if v.is_some() && max[col].as_deref() == Some(txt.as_str()) {
                    let _ = write!(s, " **{txt}** |");
                } else {
                    let _ = write!(s, " {txt} |");
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Share of trials with no parseable answer, per model.
pub fn null_rates(trials: &[TrialRecord]) -> String {
    let mut tally: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for t in trials {
        let e = tally.entry(&t.model_id).or_default();
        e.0 += usize::from(t.chosen_label.is_none());
        e.1 += usize::from(t.error.is_some());
        e.2 += 1;
    }
    csv_string(&["model", "null_answers", "gateway_errors", "trials", "null_rate"], |w| {
        for (m, (null, err, n)) in tally {
            w.write_record([m.to_string(), null.to_string(), err.to_string(), n.to_string(), format!("{:.3}", null as f64 / n as f64)])?;
        }
        Ok(())
    })
}

pub fn fit_summary(fit: &GlmmFit) -> String {
    let mut s = csv_string(&["term", "estimate", "std_error", "z", "p_value"], |w| {
        for c in &fit.coefficients {
            w.write_record([c.name.clone(), sig6(c.estimate), sig6(c.std_error), sig6(c.z), sig6(c.p_value)])?;
        }
        Ok(())
    });
    let _ = writeln!(s, "# sigma,{},{}", sig6(fit.sigma), sig6(fit.sigma_std_error));
    let _ = writeln!(s, "# loglik,{}", sig6(fit.loglik));
    let _ = writeln!(s, "# n_obs,{}", fit.n_obs);
    let _ = writeln!(s, "# converged,{},{} iterations", fit.converged, fit.n_iterations);
    for warning in &fit.warnings {
        let _ = writeln!(s, "# warning,{warning}");
    }
    s
}

pub fn lrt_summary(label: &str, r: &LrtResult) -> String {
    format!("{label},delta_chi2={},df={},p={}\n", sig6(r.delta_chi2), r.df, sig6(r.p_value))
}

pub fn screening_csv(report: &ScreeningReport) -> String {
    let flagged: std::collections::BTreeSet<&str> = report.flagged.iter().map(String::as_str).collect();
    csv_string(
        &["practice", "domain", "delta_model", "delta_bloom_fitted", "delta_bloom_empirical", "marginal_probability", "below_chance", "flagged"],
        |w| {
            for p in &report.practices {
                w.write_record([
                    p.practice_id.clone(),
                    p.domain.clone(),
                    sig6(p.delta_model),
                    sig6(p.delta_bloom_fitted),
                    sig6(p.delta_bloom_empirical),
                    sig6(p.marginal_probability),
                    p.below_chance.to_string(),
                    flagged.contains(p.practice_id.as_str()).to_string(),
                ])?;
            }
            Ok(())
        },
    )
}

/// Summary rows with counts and shares of the practice total.
pub fn screening_summary(report: &ScreeningReport) -> String {
    let th = &report.thresholds;
    let n = report.n_practices();
    let mut s = csv_string(&["statistic", "threshold", "count", "share"], |w| {
        let mut row = |name: &str, t: String, count: usize| {
            w.write_record([name.to_string(), t, count.to_string(), format!("{:.3}", report.share(count))])
        };
        row("practices", String::new(), n)?;
        row("below_chance", sig6(th.chance), report.flagged.len())?;
        row("model_separation", sig6(th.model_separation), report.model_separation_count)?;
        row("model_separation_strong", sig6(th.model_separation_strong), report.model_separation_strong_count)?;
        row("bloom_separation_fitted", sig6(th.bloom_separation), report.bloom_separation_fitted_count)?;
        row("bloom_separation_empirical", sig6(th.bloom_separation), report.bloom_separation_empirical_count)?;
        row("bloom_separation_union", sig6(th.bloom_separation), report.bloom_separation_union_count)?;
        row("bloom_negligible", sig6(th.bloom_negligible), report.bloom_negligible_count)?;
        Ok(())
    });
    let _ = writeln!(s, "# median_delta_model,{}", sig6(report.median_delta_model));
    if let Some(r) = &report.rank_stability {
        let _ = writeln!(s, "# rank_stability,max_shift={},ranking_identical={}", sig6(r.max_shift), r.ranking_identical);
        for (m, before) in &r.before {
            let after = r.after.get(m).copied().unwrap_or(f64::NAN);
            let _ = writeln!(s, "# marginal,{m},{},{}", sig6(*before), sig6(after));
        }
    }
    for notice in &report.notices {
        let _ = writeln!(s, "# notice,{notice}");
    }
    s
}

pub fn sweep_csv(report: &ScreeningReport) -> String {
    csv_string(&["threshold", "model_separation", "bloom_separation_fitted", "bloom_separation_empirical"], |w| {
        for p in &report.sweep {
            w.write_record([
                format!("{:.2}", p.threshold),
                p.model_separation.to_string(),
                p.bloom_separation_fitted.to_string(),
                p.bloom_separation_empirical.to_string(),
            ])?;
        }
        Ok(())
    })
}

fn matrix_rows(w: &mut csv::Writer<Vec<u8>>, kind: &str, m: &RateMatrix) -> csv::Result<()> {
    for (i, row) in m.iter().enumerate() {
        let mut rec = vec![kind.to_string(), Bloom::ALL[i].as_str().to_string()];
        rec.extend(row.iter().map(|v| v.map_or_else(|| "-".to_string(), sig6)));
        w.write_record(&rec)?;
    }
    Ok(())
}

/// Row = conditioning level, columns = target level.
pub fn bhpr_csv(r: &BhprResult) -> String {
    let mut header = vec!["rate", "given"];
    header.extend(Bloom::ALL.iter().map(|b| b.as_str()));
    let mut s = csv_string(&header, |w| {
        matrix_rows(w, "sgs", &r.sgs)?;
        matrix_rows(w, "sgf", &r.sgf)
    });
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), sig6);
    let _ = writeln!(
        s,
        "# sgs_lower_to_higher,{}\n# sgs_higher_to_lower,{}\n# sgf_lower_to_higher,{}\n# sgf_higher_to_lower,{}",
        f(r.sgs_lower_to_higher),
        f(r.sgs_higher_to_lower),
        f(r.sgf_lower_to_higher),
        f(r.sgf_higher_to_lower)
    );
    s
}

/// One point per residual cell.
pub fn scatter_csv(report: &ResidualReport) -> String {
    csv_string(&["model", "practice", "bloom", "n", "expected", "observed", "z", "p_value", "status"], |w| {
        for c in &report.cells {
            w.write_record([
                c.model_id.clone(),
                c.practice_id.clone(),
                c.bloom.map_or_else(String::new, |b| b.as_str().to_string()),
                c.n.to_string(),
                sig6(c.expected),
                sig6(c.observed),
                sig6(c.z),
                sig6(c.p_value),
                c.status.as_str().to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Observed against expected correct counts with the identity diagonal.
pub fn scatter_svg(report: &ResidualReport) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 40.0;
    let hi = report
        .cells
        .iter()
        .map(|c| c.expected.max(c.observed))
        .fold(1.0f64, f64::max)
        .ceil();
    let scale = (SIZE - 2.0 * PAD) / hi;
    let px = |v: f64| PAD + v * scale;
    let py = |v: f64| SIZE - PAD - v * scale;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(0.0),
        py(0.0),
        px(hi),
        py(hi)
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">expected correct</text>"#, SIZE / 2.0, SIZE - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">observed correct</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    for c in &report.cells {
        let colour = match c.status {
            CellStatus::Ok => "#9e9e9e",
            CellStatus::Better => "#1b7837",
            CellStatus::Worse => "#b2182b",
        };
        let _ = writeln!(
            s,
            r#"<circle class="{}" cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
            c.status.as_str(),
            px(c.expected),
            py(c.observed)
        );
    }
    s.push_str("</svg>\n");
    s
}
