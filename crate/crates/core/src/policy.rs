//! Softmax local policies over the functional observations and the Gaussian
//! meta-policy that emits their logits from the pooled encoder feature.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{gaussian_log_density, Tape};
use crate::env::{observe, sample_action, Action, LocalObservation, LocalPolicy, OwnClass};
use crate::error::{Error, Result};
use crate::graph::{Decoration, Graph};
use crate::mpnn::{self, Checkpoint, MpnnParams};
use crate::noise::{NoiseStreams, StreamKind};

pub const DEFAULT_SIGMA: f64 = 3.0;

/// Which local information the agents condition on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Own state and whether any neighbor is infected (6 classes).
    #[default]
    Local6,
    /// Own state only (3 classes).
    OwnState,
}

impl ObservationMode {
    pub fn classes(self) -> usize {
        match self {
            ObservationMode::Local6 => LocalObservation::COUNT,
            ObservationMode::OwnState => 3,
        }
    }

    pub fn psi_len(self) -> usize {
        3 * self.classes()
    }

    pub fn class_of(self, obs: LocalObservation) -> usize {
        match self {
            ObservationMode::Local6 => obs.index(),
            ObservationMode::OwnState => obs.own as usize,
        }
    }

    fn class_label(self, c: usize) -> String {
        match self {
            ObservationMode::Local6 => LocalObservation::from_index(c).label(),
            ObservationMode::OwnState => ["S", "I", "RV"][c].to_string(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObservationMode::Local6 => "local6",
            ObservationMode::OwnState => "own_state",
        }
    }
}

impl FromStr for ObservationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local6" => Ok(ObservationMode::Local6),
            "own_state" => Ok(ObservationMode::OwnState),
            _ => Err(Error::Config(format!("unknown observation mode {s:?}"))),
        }
    }
}

const ACTION_LABELS: [&str; 3] = ["noop", "vaccinate", "isolate"];

pub fn softmax3(logits: &[f64]) -> [f64; 3] {
    let m = logits[0].max(logits[1]).max(logits[2]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp(), (logits[2] - m).exp()];
    let z = e[0] + e[1] + e[2];
    [e[0] / z, e[1] / z, e[2] / z]
}

/// Logits laid out class-major: `psi[3 * class + action]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPolicyParams {
    pub psi: Vec<f64>,
    pub mode: ObservationMode,
}

impl LocalPolicyParams {
    pub fn new(psi: Vec<f64>, mode: ObservationMode) -> Result<Self> {
        if psi.len() != mode.psi_len() {
            return Err(Error::DimensionMismatch {
                expected: mode.psi_len(),
                got: psi.len(),
            });
        }
        if psi.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite logit".into()));
        }
        Ok(LocalPolicyParams { psi, mode })
    }

    pub fn zeros(mode: ObservationMode) -> Self {
        LocalPolicyParams {
            psi: vec![0.0; mode.psi_len()],
            mode,
        }
    }

    /// Puts `logit` on `action` for every class.
    pub fn forcing(action: Action, logit: f64, mode: ObservationMode) -> Self {
        let mut p = Self::zeros(mode);
        for c in 0..mode.classes() {
            p.psi[3 * c + action.index()] = logit;
        }
        p
    }

    /// Deterministic policy from a per-class action table.
    pub fn from_table(table: &[Action], logit: f64, mode: ObservationMode) -> Result<Self> {
        if table.len() != mode.classes() {
            return Err(Error::DimensionMismatch {
                expected: mode.classes(),
                got: table.len(),
            });
        }
        let mut p = Self::zeros(mode);
        for (c, a) in table.iter().enumerate() {
            p.psi[3 * c + a.index()] = logit;
        }
        Ok(p)
    }

    pub fn probs(&self, obs: LocalObservation) -> [f64; 3] {
        let c = self.mode.class_of(obs);
        softmax3(&self.psi[3 * c..3 * c + 3])
    }

    pub fn csv_header(mode: ObservationMode) -> String {
        (0..mode.classes())
            .flat_map(|c| ACTION_LABELS.iter().map(move |a| format!("{}:{a}", mode.class_label(c))))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_csv(&self) -> String {
        let row: Vec<String> = self.psi.iter().map(|x| format!("{x:.17e}")).collect();
        format!("{}\n{}\n", Self::csv_header(self.mode), row.join(","))
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::parse(origin, "empty file"))?.trim();
        let mode = [ObservationMode::Local6, ObservationMode::OwnState]
            .into_iter()
            .find(|&m| Self::csv_header(m) == header)
            .ok_or_else(|| Error::parse(origin, "unrecognized logit header"))?;
        let row = lines.next().ok_or_else(|| Error::parse(origin, "missing logit row"))?;
        let psi = row
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::parse(origin, format!("bad float {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(psi, mode).map_err(|e| Error::parse(origin, e.to_string()))
    }
}

impl LocalPolicy for LocalPolicyParams {
    fn action_probs(&self, g: &Graph, deco: &Decoration, i: usize, _t: usize) -> [f64; 3] {
        self.probs(observe(g, deco, i))
    }
}

/// Softmax over the three logits of `obs` under the full 6-class layout.
pub fn local_action_probs(psi: &[f64], obs: LocalObservation) -> [f64; 3] {
    let c = obs.index();
    softmax3(&psi[3 * c..3 * c + 3])
}

/// Every agent samples from the shared local policy using its own stream.
pub fn act_all(psi: &LocalPolicyParams, g: &Graph, deco: &Decoration, noise: &NoiseStreams, t: usize) -> Vec<Action> {
    (0..g.node_count())
        .map(|i| sample_action(&psi.probs(observe(g, deco, i)), noise.draw_uniform(i, t, StreamKind::Action)))
        .collect()
}

/// Log-probability of a joint action under the product policy.
pub fn joint_log_prob(psi: &LocalPolicyParams, g: &Graph, deco: &Decoration, actions: &[Action]) -> f64 {
    actions
        .iter()
        .enumerate()
        .map(|(i, a)| psi.probs(observe(g, deco, i))[a.index()].ln())
        .sum()
}

/// One draw `ψ = μ + σ z` from the meta-policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiSample {
    pub psi: LocalPolicyParams,
    pub mean: Vec<f64>,
    pub z: Vec<f64>,
    pub log_density: f64,
}

/// Gaussian over local logits centered at the encoder readout.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPolicy {
    pub mpnn: MpnnParams,
    pub sigma: f64,
    pub mode: ObservationMode,
}

impl MetaPolicy {
    pub fn new(mpnn: MpnnParams, sigma: f64, mode: ObservationMode) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if mpnn.out_dim != mode.psi_len() {
            return Err(Error::DimensionMismatch {
                expected: mode.psi_len(),
                got: mpnn.out_dim,
            });
        }
        Ok(MetaPolicy { mpnn, sigma, mode })
    }

    /// Zero-output initialization: every state maps to uniform local policies.
    pub fn zero_init(width: usize, mode: ObservationMode, seed: u64) -> Self {
        MetaPolicy {
            mpnn: MpnnParams::zero_output(width, mode.psi_len(), seed),
            sigma: DEFAULT_SIGMA,
            mode,
        }
    }

    /// Shifts the NoOp logit of every class by `bias` in the readout bias.
    pub fn with_noop_prior(mut self, bias: f64) -> Self {
        for (i, b) in self.mpnn.output_bias_mut().iter_mut().enumerate() {
            if i % 3 == Action::NoOp.index() {
                *b += bias;
            }
        }
        self
    }

    pub fn mean(&self, g: &Graph, deco: &Decoration, passes: usize) -> Result<Vec<f64>> {
        mpnn::pooled_readout(&self.mpnn, g, deco, passes)
    }

    pub fn sample(&self, g: &Graph, deco: &Decoration, passes: usize, noise: &NoiseStreams, t: usize) -> Result<PsiSample> {
        let mean = self.mean(g, deco, passes)?;
        Ok(self.sample_around(mean, noise, t))
    }

    /// Draws around a precomputed mean with the `(0, t, meta)` stream.
    pub fn sample_around(&self, mean: Vec<f64>, noise: &NoiseStreams, t: usize) -> PsiSample {
        let z = noise.standard_normals(0, t, StreamKind::Meta, mean.len());
        let psi: Vec<f64> = mean.iter().zip(&z).map(|(m, z)| m + self.sigma * z).collect();
        let log_density = gaussian_log_density(&mean, &psi, self.sigma);
        PsiSample {
            psi: LocalPolicyParams { psi, mode: self.mode },
            mean,
            z,
            log_density,
        }
    }

    pub fn log_density(&self, g: &Graph, deco: &Decoration, passes: usize, psi: &[f64]) -> Result<f64> {
        Ok(gaussian_log_density(&self.mean(g, deco, passes)?, psi, self.sigma))
    }

    /// `log π(ψ | state)` and its gradient with respect to the flat encoder
    /// parameters.
    pub fn log_density_grad(&self, g: &Graph, deco: &Decoration, passes: usize, psi: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let pv = self.mpnn.attach(&mut tape);
        let (_, mean) = mpnn::forward_var(&mut tape, &pv, g, deco, passes)?;
        let lp = tape.gaussian_log_density(mean, psi, self.sigma)?;
        let grads = tape.backward(lp)?;
        Ok((tape.value(lp).get(0, 0), pv.flat_grad(&tape, &grads)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = self.mpnn.to_checkpoint();
        c.header.attrs.insert("role".into(), "meta_policy".into());
        c.header.attrs.insert("sigma".into(), format!("{:?}", self.sigma));
        c.header.attrs.insert("obs_mode".into(), self.mode.as_str().into());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let sigma = match c.header.attrs.get("sigma") {
            Some(s) => s.parse().map_err(|_| Error::Config(format!("bad sigma {s:?}")))?,
            None => DEFAULT_SIGMA,
        };
        let mode = match c.header.attrs.get("obs_mode") {
            Some(s) => s.parse()?,
            None => ObservationMode::Local6,
        };
        Self::new(MpnnParams::from_checkpoint(c)?, sigma, mode)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Probability of `action` for class `obs`, averaged over the meta-policy's
/// Gaussian with common draws `zs`.
pub fn expected_action_prob(mean: &[f64], sigma: f64, mode: ObservationMode, obs: LocalObservation, action: Action, zs: &[Vec<f64>]) -> f64 {
    let c = mode.class_of(obs);
    let total: f64 = zs
        .iter()
        .map(|z| {
            let l: Vec<f64> = (0..3).map(|a| mean[3 * c + a] + sigma * z[3 * c + a]).collect();
            softmax3(&l)[action.index()]
        })
        .sum();
    total / zs.len().max(1) as f64
}

/// Per-class summary string, `label: p_noop/p_vacc/p_iso`.
pub fn describe(psi: &LocalPolicyParams) -> String {
    let mut s = String::new();
    for c in 0..psi.mode.classes() {
        let p = softmax3(&psi.psi[3 * c..3 * c + 3]);
        let _ = write!(s, "{}: {:.3}/{:.3}/{:.3}  ", psi.mode.class_label(c), p[0], p[1], p[2]);
    }
    s.trim_end().to_string()
}

impl OwnClass {
    pub fn index(self) -> usize {
        self as usize
    }
}
