//! Attribute pools and seeded persona sampling.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FactoryError;
use crate::corpus::{CaregivingProfile, DietProfile, Domain, Profile, TeachingProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DietPools {
    pub names: Vec<String>,
    pub age_range: (u32, u32),
    pub sexes: Vec<String>,
    pub health_conditions: Vec<String>,
    pub primary_goals: Vec<String>,
    pub cooking_habits: Vec<String>,
    pub food_avoidances: Vec<String>,
    pub traits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingPools {
    pub names: Vec<String>,
    /// `(discipline, class name)`
    pub courses: Vec<(String, String)>,
    pub formats: Vec<String>,
    pub class_size_range: (u32, u32),
    pub experience_range: (u32, u32),
    pub narratives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaregivingPools {
    pub names: Vec<String>,
    pub relationships: Vec<String>,
    pub age_range: (u32, u32),
    pub patient_conditions: Vec<String>,
    pub living_situations: Vec<String>,
    pub care_goals: Vec<String>,
    pub traits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum ProfilePools {
    Diet(DietPools),
    Teaching(TeachingPools),
    Caregiving(CaregivingPools),
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl ProfilePools {
    pub fn default_for(domain: &Domain) -> Result<Self, FactoryError> {
        Ok(match domain {
            Domain::Diet => ProfilePools::Diet(DietPools {
                names: strings(&[
                    "Maria", "James", "Aisha", "Chen", "Fatima", "Robert", "Priya", "Daniel", "Sofia", "Kwame", "Elena",
                    "Hiro", "Grace", "Omar", "Lucy", "Mateo",
                ]),
                age_range: (19, 78),
                sexes: strings(&["female", "male"]),
                health_conditions: strings(&[
                    "hypertension",
                    "type 2 diabetes",
                    "high cholesterol",
                    "prediabetes",
                    "iron-deficiency anemia",
                    "mild obesity",
                    "osteopenia",
                    "acid reflux",
                ]),
                primary_goals: strings(&[
                    "lose 10 pounds",
                    "lower blood pressure",
                    "eat more vegetables",
                    "cut back on sugar",
                    "build more energy for work",
                    "keep blood sugar steady",
                ]),
                cooking_habits: strings(&[
                    "cooks on weekends only",
                    "relies on takeout most nights",
                    "cooks simple meals daily",
                    "batch cooks on Sundays",
                    "rarely cooks and snacks often",
                ]),
                food_avoidances: strings(&["shellfish", "dairy", "pork", "gluten", "peanuts", "red meat"]),
                traits: strings(&["busy", "social", "budget-conscious", "stressed", "curious", "routine-driven", "impatient", "frugal"]),
            }),
            Domain::Teaching => ProfilePools::Teaching(TeachingPools {
                names: strings(&[
                    "Dr. Lee", "Dr. Patel", "Prof. Garcia", "Dr. Okafor", "Prof. Nguyen", "Dr. Smith", "Prof. Rossi", "Dr. Kim",
                    "Prof. Haddad", "Dr. Novak",
                ]),
                courses: vec![
                    ("Biology".into(), "Introductory Biology".into()),
                    ("Chemistry".into(), "General Chemistry".into()),
                    ("History".into(), "World History".into()),
                    ("Computer Science".into(), "Intro to Programming".into()),
                    ("Psychology".into(), "Introduction to Psychology".into()),
                    ("Economics".into(), "Principles of Microeconomics".into()),
                    ("Mathematics".into(), "Calculus I".into()),
                    ("English".into(), "College Writing".into()),
                ],
                formats: strings(&["large lecture", "seminar", "lab section", "hybrid course", "online course"]),
                class_size_range: (15, 250),
                experience_range: (1, 25),
                narratives: strings(&[
                    "Prefers detailed slides and a fixed schedule.",
                    "Enjoys improvising and telling stories in class.",
                    "Worries about covering the full syllabus.",
                    "Keeps class energetic but loosely structured.",
                    "Values rigor and grades carefully.",
                    "Is new to the institution and still adjusting.",
                ]),
            }),
            Domain::Caregiving => ProfilePools::Caregiving(CaregivingPools {
                names: strings(&["Linda", "Marcus", "Yuki", "Beatriz", "Samuel", "Nadia", "Tom", "Rosa"]),
                relationships: strings(&["spouse", "father", "mother", "brother", "grandmother", "partner"]),
                age_range: (28, 80),
                patient_conditions: strings(&[
                    "a left-side stroke with arm weakness",
                    "a stroke affecting balance",
                    "a stroke with mild speech loss",
                    "a right-side stroke with fatigue",
                ]),
                living_situations: strings(&[
                    "two-story house",
                    "small apartment",
                    "shared home with adult children",
                    "rural farmhouse",
                ]),
                care_goals: strings(&[
                    "regain independence with dressing",
                    "walk safely around the house",
                    "keep a steady daily routine",
                    "prevent another stroke",
                ]),
                traits: strings(&["patient", "anxious", "organized", "overcommitted", "upbeat", "tired"]),
            }),
            Domain::Other(name) => {
                return Err(FactoryError::Config(format!("no default profile pools for domain `{name}`")))
            }
        })
    }

    pub fn domain(&self) -> Domain {
        match self {
            ProfilePools::Diet(_) => Domain::Diet,
            ProfilePools::Teaching(_) => Domain::Teaching,
            ProfilePools::Caregiving(_) => Domain::Caregiving,
        }
    }
}

fn pick<R: Rng + ?Sized>(pool: &[String], name: &str, rng: &mut R) -> Result<String, FactoryError> {
    pool.choose(rng)
        .cloned()
        .ok_or_else(|| FactoryError::Config(format!("profile pool `{name}` is empty")))
}

fn pick_two<R: Rng + ?Sized>(pool: &[String], name: &str, rng: &mut R) -> Result<Vec<String>, FactoryError> {
    if pool.len() < 2 {
        return Err(FactoryError::Config(format!("profile pool `{name}` needs at least two entries")));
    }
    Ok(pool.choose_multiple(rng, 2).cloned().collect())
}

fn in_range<R: Rng + ?Sized>((lo, hi): (u32, u32), rng: &mut R) -> u32 {
    rng.random_range(lo.min(hi)..=hi.max(lo))
}

pub fn generate_profile<R: Rng + ?Sized>(pools: &ProfilePools, rng: &mut R) -> Result<Profile, FactoryError> {
    Ok(match pools {
        ProfilePools::Diet(p) => Profile::Diet(DietProfile {
            name: pick(&p.names, "names", rng)?,
            age: in_range(p.age_range, rng),
            sex: pick(&p.sexes, "sexes", rng)?,
            health_condition: pick(&p.health_conditions, "health_conditions", rng)?,
            primary_goal: pick(&p.primary_goals, "primary_goals", rng)?,
            cooking_habits: pick(&p.cooking_habits, "cooking_habits", rng)?,
            food_avoidance: pick(&p.food_avoidances, "food_avoidances", rng)?,
            traits: pick_two(&p.traits, "traits", rng)?,
        }),
        ProfilePools::Teaching(p) => {
            let (discipline, class_name) = p
                .courses
                .choose(rng)
                .cloned()
                .ok_or_else(|| FactoryError::Config("profile pool `courses` is empty".into()))?;
            Profile::Teaching(TeachingProfile {
                instructor_name: pick(&p.names, "names", rng)?,
                discipline,
                class_name,
                class_size: in_range(p.class_size_range, rng).max(1),
                format: pick(&p.formats, "formats", rng)?,
                years_experience: in_range(p.experience_range, rng),
                ocean_scores: (0..5).map(|_| rng.random_range(1..=10u8)).collect(),
                narrative_summary: pick(&p.narratives, "narratives", rng)?,
            })
        }
        ProfilePools::Caregiving(p) => Profile::Caregiving(CaregivingProfile {
            caregiver_name: pick(&p.names, "names", rng)?,
            relationship: pick(&p.relationships, "relationships", rng)?,
            caregiver_age: in_range(p.age_range, rng),
            patient_condition: pick(&p.patient_conditions, "patient_conditions", rng)?,
            living_situation: pick(&p.living_situations, "living_situations", rng)?,
            care_goal: pick(&p.care_goals, "care_goals", rng)?,
            traits: pick_two(&p.traits, "traits", rng)?,
        }),
    })
}
