//! JSON experiment-spec loading and validation.

use nalgebra::DMatrix;
use serde::Deserialize;

use slqr::linalg::SymMatrix;
use slqr::learner::LearnerConfig;
use slqr::sysmodel::{CostSpec, Gain, SystemModel};

use crate::CliError;

/// Matrix literal: explicit dimensions plus row-major nested arrays.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<f64>>,
}

impl MatrixSpec {
    pub fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>, CliError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(CliError::validation(format!(
                "{name}: rows and cols must be positive"
            )));
        }
        if self.data.len() != self.rows || self.data.iter().any(|r| r.len() != self.cols) {
            return Err(CliError::validation(format!(
                "{name}: data shape does not match rows = {}, cols = {}",
                self.rows, self.cols
            )));
        }
        let flat: Vec<f64> = self.data.iter().flatten().copied().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(CliError::validation(format!("{name}: non-finite entry")));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &flat))
    }

    pub fn to_sym(&self, name: &str) -> Result<SymMatrix, CliError> {
        SymMatrix::new(self.to_matrix(name)?)
            .map_err(|e| CliError::validation(format!("{name}: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub a: MatrixSpec,
    pub b: MatrixSpec,
    pub c: MatrixSpec,
    pub d: MatrixSpec,
    pub w: MatrixSpec,
    pub x0: MatrixSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpecJson {
    pub q: MatrixSpec,
    pub r: MatrixSpec,
    pub gamma: f64,
}

fn default_probe_std() -> f64 {
    1.0
}

fn default_trace_correction() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub l0: MatrixSpec,
    pub n_steps: usize,
    pub num_mean: usize,
    pub i_max: usize,
    pub eps: f64,
    #[serde(default = "default_probe_std")]
    pub probe_std: f64,
    pub master_seed: u64,
    #[serde(default = "default_trace_correction")]
    pub trace_correction: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpecJson {
    pub model: ModelSpec,
    pub cost: CostSpecJson,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub reference_gain: Option<MatrixSpec>,
    pub output_dir: String,
}

/// Fully validated experiment description.
pub struct ExperimentSpec {
    pub model: SystemModel,
    pub cost: CostSpec,
    pub learner: LearnerConfig,
    pub reference_gain: Option<Gain>,
    pub output_dir: std::path::PathBuf,
}

pub fn load_spec(path: &std::path::Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let raw: ExperimentSpecJson = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    build_spec(raw)
}

pub fn build_spec(raw: ExperimentSpecJson) -> Result<ExperimentSpec, CliError> {
    let model = SystemModel::new(
        raw.model.a.to_matrix("model.a")?,
        raw.model.b.to_matrix("model.b")?,
        raw.model.c.to_matrix("model.c")?,
        raw.model.d.to_matrix("model.d")?,
        raw.model.w.to_sym("model.w")?,
        raw.model.x0.to_sym("model.x0")?,
    )
    .map_err(|e| CliError::validation(format!("model: {e}")))?;
    let cost = CostSpec::new(
        raw.cost.q.to_sym("cost.q")?,
        raw.cost.r.to_sym("cost.r")?,
        raw.cost.gamma,
    )
    .map_err(|e| CliError::validation(format!("cost: {e}")))?;
    let l0 = Gain::new(raw.learner.l0.to_matrix("learner.l0")?);
    let learner = LearnerConfig {
        l0,
        gamma: raw.cost.gamma,
        n_steps: raw.learner.n_steps,
        num_mean: raw.learner.num_mean,
        i_max: raw.learner.i_max,
        eps: raw.learner.eps,
        probe_std: raw.learner.probe_std,
        master_seed: raw.learner.master_seed,
        trace_correction: raw.learner.trace_correction,
    };
    learner
        .validate(model.state_dim(), model.input_dim())
        .map_err(|e| CliError::validation(format!("learner: {e}")))?;
    let reference_gain = match raw.reference_gain {
        Some(m) => {
            let g = Gain::new(m.to_matrix("reference_gain")?);
            if g.l.nrows() != model.input_dim() || g.l.ncols() != model.state_dim() {
                return Err(CliError::validation(
                    "reference_gain dimensions do not match the model".into(),
                ));
            }
            Some(g)
        }
        None => None,
    };
    Ok(ExperimentSpec {
        model,
        cost,
        learner,
        reference_gain,
        output_dir: raw.output_dir.into(),
    })
}
