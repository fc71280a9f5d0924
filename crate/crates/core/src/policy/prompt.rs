//! Planner context and the versioned prompt template.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::PdeSummary;
use crate::pgkr::Retrieved;
use crate::space::yaml::{to_yaml, CONFIG_KEYS};
use crate::space::SearchSpace;
use crate::tree::TreeState;

/// Bump whenever the template text or section order changes.
pub const PROMPT_VERSION: &str = "planner-prompt/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("feedback must be present exactly when the iteration index is positive (t = {0})")]
    Feedback(u32),
    #[error("iteration {t} is outside 0..{n}")]
    Iteration { t: u32, n: u32 },
}

/// Compact view of a loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub points: usize,
    pub first: Option<f64>,
    pub last: Option<f64>,
    pub min: Option<f64>,
}

impl CurveSummary {
    pub fn from_losses(losses: &[f64]) -> Self {
        Self {
            points: losses.len(),
            first: losses.first().copied(),
            last: losses.last().copied(),
            min: losses.iter().copied().reduce(f64::min),
        }
    }
}

/// Outcome of the previous iteration's best proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub mse: Option<f64>,
    pub diverged: bool,
    pub curve: CurveSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerContext {
    pub pde: PdeSummary,
    pub retrieved: Vec<Retrieved>,
    pub path: TreeState,
    feedback: Option<Feedback>,
    /// Zero-based index `t` of this iteration.
    pub iteration: u32,
    pub iterations: u32,
}

impl PlannerContext {
    pub fn new(
        pde: PdeSummary,
        retrieved: Vec<Retrieved>,
        path: TreeState,
        feedback: Option<Feedback>,
        iteration: u32,
        iterations: u32,
    ) -> Result<Self, ContextError> {
        if iteration >= iterations {
            return Err(ContextError::Iteration {
                t: iteration,
                n: iterations,
            });
        }
        if feedback.is_some() != (iteration > 0) {
            return Err(ContextError::Feedback(iteration));
        }
        Ok(Self {
            pde,
            retrieved,
            path,
            feedback,
            iteration,
            iterations,
        })
    }

    pub fn feedback(&self) -> Option<&Feedback> {
        self.feedback.as_ref()
    }
}

fn sci(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4e}"))
}

pub fn build_prompt(ctx: &PlannerContext, space: &SearchSpace) -> String {
    let mut p = String::new();
    p.push_str(&format!("[{PROMPT_VERSION}]\n\n"));
    p.push_str("## Task\n");
    p.push_str(
        "You are tuning a physics-informed neural network for the PDE below. \
         Propose one training configuration. Reply with exactly one fenced YAML block \
         (```yaml ... ```) that sets every schema key, using only values from the grids listed.\n\n",
    );

    p.push_str("## PDE\n");
    p.push_str(&format!("id: {}\n", ctx.pde.id));
    p.push_str(&format!("equation: {}\n", ctx.pde.equation));
    p.push_str(&format!("spatial_dims: {}\n", ctx.pde.spatial_dims));
    p.push_str(&format!("time_dependent: {}\n", ctx.pde.time_dependent));
    p.push_str(&format!(
        "labels: {}\n",
        serde_json::to_string(&ctx.pde.labels).expect("labels serialize")
    ));
    p.push_str(&format!("iteration: {} of {}\n\n", ctx.iteration + 1, ctx.iterations));

    p.push_str("## Search space\n");
    p.push_str(&space.describe());
    p.push('\n');
    p.push_str(&format!(
        "fixed: train_iters = {}, loss_weights = {{pde: {}, bc: {}, ic: {}}}\n",
        space.defaults.train_iters,
        space.defaults.loss_weights.pde,
        space.defaults.loss_weights.bc,
        space.defaults.loss_weights.ic
    ));
    if !space.time_dependent {
        p.push_str("n_initial must be 0 (no initial condition).\n");
    }
    p.push('\n');

    p.push_str("## Schema\n");
    p.push_str(&format!("keys: {}\n\n", CONFIG_KEYS.join(", ")));

    p.push_str("## Retrieved configurations\n");
    if ctx.retrieved.is_empty() {
        p.push_str("none\n");
    }
    for (i, r) in ctx.retrieved.iter().enumerate() {
        p.push_str(&format!(
            "### {}. {} (similarity {:.4}, mse {})\n```yaml\n{}```\n",
            i + 1,
            r.pde_id,
            r.similarity,
            sci(Some(r.mse)),
            to_yaml(&r.config)
        ));
    }
    p.push('\n');

    p.push_str("## Current tree path\n");
    if ctx.path.path.is_empty() {
        p.push_str("root\n");
    }
    for (axis, value) in &ctx.path.path {
        p.push_str(&format!("{axis} = {value}\n"));
    }

    if let Some(f) = &ctx.feedback {
        p.push_str(&format!("\n## Feedback from iteration {}\n", ctx.iteration));
        p.push_str(&format!("mse: {}\n", sci(f.mse)));
        p.push_str(&format!("diverged: {}\n", f.diverged));
        p.push_str(&format!(
            "loss curve: {} points, first {}, last {}, min {}\n",
            f.curve.points,
            sci(f.curve.first),
            sci(f.curve.last),
            sci(f.curve.min)
        ));
    }
    p
}

/// Follow-up message after a rejected reply.
pub fn repair_prompt(problems: &str) -> String {
    format!(
        "Your configuration was rejected:\n{problems}\n\
         Reply again with exactly one fenced YAML block that fixes these problems.\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::space::{Axis, AxisValue, NetType};

    fn fixture(t: u32) -> PlannerContext {
        let pde = catalog::get("heat1d").unwrap().summary();
        let space = SearchSpace::tree(true);
        let mut config = space.base_config();
        config.width = 64;
        config.seed = 7;
        let retrieved = vec![Retrieved {
            pde_id: "wave1d".into(),
            similarity: 0.875,
            config,
            mse: 3.25e-4,
        }];
        let path = TreeState {
            path: vec![(Axis::NetType, AxisValue::Net(NetType::Laaf))],
        };
        let feedback = (t > 0).then(|| Feedback {
            mse: Some(1.5e-3),
            diverged: false,
            curve: CurveSummary::from_losses(&[2.0, 0.5, 0.25]),
        });
        PlannerContext::new(pde, retrieved, path, feedback, t, 5).unwrap()
    }

    #[test]
    fn contains_retrieved_yaml_and_mse() {
        let ctx = fixture(1);
        let p = build_prompt(&ctx, &SearchSpace::tree(true));
        assert!(p.contains(&to_yaml(&ctx.retrieved[0].config)));
        assert!(p.contains("3.2500e-4"));
        assert!(p.contains("## Feedback from iteration 1"));
    }

    #[test]
    fn first_iteration_has_no_feedback() {
        let p = build_prompt(&fixture(0), &SearchSpace::tree(true));
        assert!(!p.contains("## Feedback"));
    }

    #[test]
    fn feedback_iff_not_first() {
        let pde = catalog::get("heat1d").unwrap().summary();
        let path = TreeState { path: vec![] };
        assert_eq!(
            PlannerContext::new(pde.clone(), vec![], path.clone(), None, 1, 5),
            Err(ContextError::Feedback(1))
        );
        let fb = Feedback {
            mse: None,
            diverged: true,
            curve: CurveSummary::from_losses(&[]),
        };
        assert_eq!(
            PlannerContext::new(pde, vec![], path, Some(fb), 0, 5),
            Err(ContextError::Feedback(0))
        );
    }

    #[test]
    fn matches_golden_file() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/planner_prompt.txt");
        let prompt = build_prompt(&fixture(2), &SearchSpace::tree(true));
        match std::fs::read_to_string(&path) {
            Ok(golden) => {
                assert!(
                    golden.starts_with(&format!("[{PROMPT_VERSION}]")),
                    "golden file is for another version"
                );
                assert_eq!(prompt, golden);
            }
            Err(_) => {
                std::fs::create_dir_all(path.parent().unwrap()).unwrap();
                std::fs::write(&path, &prompt).unwrap();
            }
        }
    }
}
