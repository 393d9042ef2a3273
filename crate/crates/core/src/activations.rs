//! Scalar activation functions and their analytic derivatives.
//!
//! Six kinds are supported. `Relu` and `Tanh` have no parameters, `PRelu`
//! carries a negative-side slope, and the three splitting activations carry
//! the parameters that control where and how far they tear the real line:
//!
//! - `signsplit(x) = x + sign(x)·c`
//! - `smoothsplit(x) = x + tanh(α·x)·c`
//! - `parametricsplit(x)`, a three-piece linear map parameterised by an
//!   angle `a` and a slope `b`.
//!
//! One parameter set is shared by every unit of a layer.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Middle branch of `parametricsplit` is skipped when `0 < cos a` falls below this.
pub const TAN_GUARD: f64 = 1e-12;

/// Minimum distance from a branch boundary required by [`finite_diff_check`].
pub const BOUNDARY_MARGIN: f64 = 1e-3;

/// Initial negative-side slope for `PRelu`.
pub const PRELU_INIT_SLOPE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Relu,
    Tanh,
    PRelu,
    SignSplit,
    SmoothSplit,
    ParametricSplit,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::Relu,
        ActivationKind::Tanh,
        ActivationKind::PRelu,
        ActivationKind::SignSplit,
        ActivationKind::SmoothSplit,
        ActivationKind::ParametricSplit,
    ];

    /// Number of learnable scalars carried by this kind.
    pub fn arity(self) -> usize {
        match self {
            ActivationKind::Relu | ActivationKind::Tanh => 0,
            ActivationKind::PRelu | ActivationKind::SignSplit => 1,
            ActivationKind::SmoothSplit | ActivationKind::ParametricSplit => 2,
        }
    }

    /// Parameter names in storage order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ActivationKind::Relu | ActivationKind::Tanh => &[],
            ActivationKind::PRelu => &["slope"],
            ActivationKind::SignSplit => &["c"],
            ActivationKind::SmoothSplit => &["c", "alpha"],
            ActivationKind::ParametricSplit => &["a", "b"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::PRelu => "prelu",
            ActivationKind::SignSplit => "signsplit",
            ActivationKind::SmoothSplit => "smoothsplit",
            ActivationKind::ParametricSplit => "parametricsplit",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let valid: Vec<_> = ActivationKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!("unknown activation `{s}` (valid: {})", valid.join(", ")))
            })
    }
}

impl serde::Serialize for ActivationKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for ActivationKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An activation kind together with its current parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationState {
    kind: ActivationKind,
    params: Vec<f64>,
}

/// Gradients produced by [`ActivationState::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationGrads {
    pub d_input: Vec<f64>,
    pub d_params: Vec<f64>,
}

impl ActivationState {
    pub fn new(kind: ActivationKind, params: Vec<f64>) -> Result<Self> {
        if params.len() != kind.arity() {
            return Err(Error::InvalidArgument(format!(
                "{kind} takes {} parameter(s), got {}",
                kind.arity(),
                params.len()
            )));
        }
        if let Some(p) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("{kind} parameter is not finite: {p}")));
        }
        Ok(Self { kind, params })
    }

    pub fn relu() -> Self {
        Self {
            kind: ActivationKind::Relu,
            params: Vec::new(),
        }
    }

    pub fn tanh() -> Self {
        Self {
            kind: ActivationKind::Tanh,
            params: Vec::new(),
        }
    }

    pub fn prelu(slope: f64) -> Self {
        Self {
            kind: ActivationKind::PRelu,
            params: vec![slope],
        }
    }

    pub fn signsplit(c: f64) -> Self {
        Self {
            kind: ActivationKind::SignSplit,
            params: vec![c],
        }
    }

    pub fn smoothsplit(c: f64, alpha: f64) -> Self {
        Self {
            kind: ActivationKind::SmoothSplit,
            params: vec![c, alpha],
        }
    }

    pub fn parametricsplit(a: f64, b: f64) -> Self {
        Self {
            kind: ActivationKind::ParametricSplit,
            params: vec![a, b],
        }
    }

    /// Draws initial parameters for `kind`.
    ///
    /// `c` and `α` start in U(0, 1). For `parametricsplit`, `a ~ U(0, π/2)` and
    /// `b ~ U(0, 1)`; `prelu` starts at a fixed slope of 0.25.
    pub fn init<R: Rng + ?Sized>(kind: ActivationKind, rng: &mut R) -> Self {
        let params = match kind {
            ActivationKind::Relu | ActivationKind::Tanh => Vec::new(),
            ActivationKind::PRelu => vec![PRELU_INIT_SLOPE],
            ActivationKind::SignSplit => vec![rng.random::<f64>()],
            ActivationKind::SmoothSplit => {
                let c = rng.random::<f64>();
                let alpha = rng.random::<f64>();
                vec![c, alpha]
            }
            ActivationKind::ParametricSplit => {
                let a = rng.random::<f64>() * FRAC_PI_2;
                let b = rng.random::<f64>();
                vec![a, b]
            }
        };
        Self { kind, params }
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Value of the activation at a single point.
    pub fn eval(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            ActivationKind::Relu => relu(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::PRelu => {
                if x > 0.0 {
                    x
                } else {
                    p[0] * x
                }
            }
            ActivationKind::SignSplit => signsplit(x, p[0]),
            ActivationKind::SmoothSplit => smoothsplit(x, p[0], p[1]),
            ActivationKind::ParametricSplit => parametricsplit(x, p[0], p[1]),
        }
    }

    /// Elementwise application; the output has the input's length.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.eval(v)).collect()
    }

    /// Writes `∂y/∂x` into the return value and accumulates `∂y/∂θ_j` into `d_params`.
    fn local_grad(&self, x: f64, upstream: f64, d_params: &mut [f64]) -> f64 {
        let p = &self.params;
        match self.kind {
            ActivationKind::Relu => {
                if x > 0.0 {
                    upstream
                } else {
                    0.0
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                upstream * (1.0 - t * t)
            }
            ActivationKind::PRelu => {
                if x > 0.0 {
                    upstream
                } else {
                    d_params[0] += upstream * x;
                    upstream * p[0]
                }
            }
            ActivationKind::SignSplit => {
                d_params[0] += upstream * sign(x);
                upstream
            }
            ActivationKind::SmoothSplit => {
                let (c, alpha) = (p[0], p[1]);
                let t = (alpha * x).tanh();
                let sech2 = 1.0 - t * t;
                d_params[0] += upstream * t;
                d_params[1] += upstream * c * x * sech2;
                upstream * (1.0 + c * alpha * sech2)
            }
            ActivationKind::ParametricSplit => {
                let (a, b) = (p[0], p[1]);
                let (sin_a, cos_a) = a.sin_cos();
                match parametric_branch(x, cos_a) {
                    ParametricBranch::Lower => {
                        d_params[0] += upstream * (-b * sin_a - cos_a);
                        d_params[1] += upstream * (x + cos_a);
                        upstream * b
                    }
                    ParametricBranch::Middle => {
                        d_params[0] += upstream * x / (cos_a * cos_a);
                        upstream * a.tan()
                    }
                    ParametricBranch::Upper => {
                        d_params[0] += upstream * (cos_a + sin_a);
                        upstream
                    }
                }
            }
        }
    }

    /// Analytic backward pass.
    ///
    /// `d_input[i] = upstream[i]·∂y/∂x(x[i])` and
    /// `d_params[j] = Σ_i upstream[i]·∂y/∂θ_j(x[i])`. At branch boundaries the
    /// branch chosen by [`eval`](Self::eval) supplies the derivative.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<ActivationGrads> {
        if x.len() != upstream.len() {
            return Err(Error::Shape(format!(
                "input has {} entries but upstream gradient has {}",
                x.len(),
                upstream.len()
            )));
        }
        let mut d_params = vec![0.0; self.params.len()];
        let d_input = x
            .iter()
            .zip(upstream)
            .map(|(&xi, &gi)| self.local_grad(xi, gi, &mut d_params))
            .collect();
        Ok(ActivationGrads { d_input, d_params })
    }

    /// Points where the activation switches branch (excluding the smooth kinds).
    pub fn branch_boundaries(&self) -> Vec<f64> {
        match self.kind {
            ActivationKind::Relu | ActivationKind::PRelu | ActivationKind::SignSplit => vec![0.0],
            ActivationKind::Tanh | ActivationKind::SmoothSplit => Vec::new(),
            ActivationKind::ParametricSplit => {
                let c = self.params[0].cos();
                vec![-c, c]
            }
        }
    }
}

impl fmt::Display for ActivationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for (name, v) in self.kind.param_names().iter().zip(&self.params) {
            write!(f, " {name}={v}")?;
        }
        Ok(())
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn signsplit(x: f64, c: f64) -> f64 {
    x + sign(x) * c
}

pub fn smoothsplit(x: f64, c: f64, alpha: f64) -> f64 {
    x + (alpha * x).tanh() * c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ParametricBranch {
    Lower,
    Middle,
    Upper,
}

/// First-match branch selection: `x ≤ −cos a`, then `x ≤ cos a`, then the rest.
///
/// The middle interval is empty when `cos a ≤ 0`, and is treated as empty when
/// `cos a < TAN_GUARD` so `tan a` is never evaluated near its pole.
pub(crate) fn parametric_branch(x: f64, cos_a: f64) -> ParametricBranch {
    if x <= -cos_a {
        ParametricBranch::Lower
    } else if cos_a >= TAN_GUARD && x <= cos_a {
        ParametricBranch::Middle
    } else {
        ParametricBranch::Upper
    }
}

pub fn parametricsplit(x: f64, a: f64, b: f64) -> f64 {
    let (sin_a, cos_a) = a.sin_cos();
    match parametric_branch(x, cos_a) {
        ParametricBranch::Lower => b * x + b * cos_a - sin_a,
        ParametricBranch::Middle => x * a.tan(),
        ParametricBranch::Upper => x + sin_a - cos_a,
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compares [`ActivationState::backward`] against central differences.
///
/// Every input partial and every parameter partial (of `Σ_i y_i`) is checked;
/// the result is the largest relative error `|analytic − numeric| / max(1, |analytic|)`.
/// Points closer than [`BOUNDARY_MARGIN`] to a branch boundary are rejected.
pub fn finite_diff_check(state: &ActivationState, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let boundaries = state.branch_boundaries();
    if let Some(&bad) = x
        .iter()
        .find(|&&xi| boundaries.iter().any(|&b| (xi - b).abs() <= BOUNDARY_MARGIN))
    {
        return Err(Error::IllPosedCheck(format!(
            "x = {bad} lies within {BOUNDARY_MARGIN} of a branch boundary of {}",
            state.kind()
        )));
    }

    let ones = vec![1.0; x.len()];
    let grads = state.backward(x, &ones)?;
    Ok(compare_to_numeric(state, x, h, &grads))
}

/// Largest relative error between `grads` (taken with unit upstream) and
/// central differences of `state` at `x`. Performs no boundary screening.
pub fn compare_to_numeric(state: &ActivationState, x: &[f64], h: f64, grads: &ActivationGrads) -> f64 {
    let mut worst = 0.0f64;

    for (i, &xi) in x.iter().enumerate() {
        let numeric = (state.eval(xi + h) - state.eval(xi - h)) / (2.0 * h);
        worst = worst.max(rel_err(grads.d_input[i], numeric));
    }

    for j in 0..state.params.len() {
        let mut plus = state.clone();
        plus.params[j] += h;
        let mut minus = state.clone();
        minus.params[j] -= h;
        let numeric: f64 = x.iter().map(|&xi| (plus.eval(xi) - minus.eval(xi)) / (2.0 * h)).sum();
        worst = worst.max(rel_err(grads.d_params[j], numeric));
    }
    worst
}
