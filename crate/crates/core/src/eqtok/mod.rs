//! Equation tokenization.
//!
//! An [`EquationSpec`] is rendered into symbol runs (governing equation,
//! forcing, initial condition, sampled values, target time), the runs are
//! joined with `&`, mapped to ids over the canonical [`Vocabulary`] and padded
//! to a fixed length.

mod number;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pde1d::ForcingParams;
use crate::pde2d::poisson::{BoundaryKind, PoissonSetup};

pub use number::{parse_number, tokenize_number, DEFAULT_PRECISION};
pub use vocab::{build_vocabulary, Vocabulary, PAD_TOKEN, VOCAB_VERSION};

/// Padded token length for the 1D families.
pub const PAD_1D: usize = 500;
/// Padded token length for Navier-Stokes and Poisson.
pub const PAD_2D: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TokenError {
    #[error("cannot tokenize non-finite value {0}")]
    NonFinite(f64),
    #[error("precision {0} outside 1..=17 significant digits")]
    Precision(usize),
    #[error("rendered equation needs {required} tokens but the sequence is padded to {pad_to}")]
    Overflow { required: usize, pad_to: usize },
    #[error("token id {0} is outside the vocabulary")]
    UnknownId(i64),
    #[error("no vocabulary token matches text at byte {offset}: {snippet:?}")]
    UnknownText { offset: usize, snippet: String },
    #[error("malformed vocabulary manifest: {0}")]
    Manifest(String),
    #[error("token sequence length {got} does not match expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("invalid equation: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Heat,
    Burgers,
    Kdv,
    NavierStokes,
    Poisson,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Heat, Family::Burgers, Family::Kdv, Family::NavierStokes, Family::Poisson];

    pub fn name(self) -> &'static str {
        match self {
            Family::Heat => "heat",
            Family::Burgers => "burgers",
            Family::Kdv => "kdv",
            Family::NavierStokes => "navier_stokes",
            Family::Poisson => "poisson",
        }
    }

    pub fn parse(name: &str) -> Option<Family> {
        match name {
            "heat" => Some(Family::Heat),
            "burgers" => Some(Family::Burgers),
            "kdv" => Some(Family::Kdv),
            "ns" | "navier_stokes" | "navier-stokes" => Some(Family::NavierStokes),
            "poisson" => Some(Family::Poisson),
            _ => None,
        }
    }

    pub fn is_1d(self) -> bool {
        matches!(self, Family::Heat | Family::Burgers | Family::Kdv)
    }

    /// Padded token length used by datasets of this family.
    pub fn pad_len(self) -> usize {
        if self.is_1d() {
            PAD_1D
        } else {
            PAD_2D
        }
    }
}

/// One instance of the 1D flux-form equation
/// `u_t + (alpha u^2 - beta u_x + gamma u_xx)_x = forcing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDSpec {
    pub family: Family,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub forcing: ForcingParams,
    pub target_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavierStokesSpec {
    pub nu: f64,
    pub amp: f64,
    pub target_time: f64,
}

/// Symbolic and numeric description of one PDE instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquationSpec {
    OneD(OneDSpec),
    NavierStokes(NavierStokesSpec),
    Poisson(PoissonSetup),
}

/// Target time passed to every steady-state sample.
pub const STEADY_STATE_TIME: f64 = 1.0;

impl EquationSpec {
    pub fn family(&self) -> Family {
        match self {
            EquationSpec::OneD(s) => s.family,
            EquationSpec::NavierStokes(_) => Family::NavierStokes,
            EquationSpec::Poisson(_) => Family::Poisson,
        }
    }

    pub fn target_time(&self) -> f64 {
        match self {
            EquationSpec::OneD(s) => s.target_time,
            EquationSpec::NavierStokes(s) => s.target_time,
            EquationSpec::Poisson(_) => STEADY_STATE_TIME,
        }
    }

    /// Copy with a different target time. Steady-state specs keep the sentinel.
    pub fn with_target_time(&self, t: f64) -> EquationSpec {
        let mut out = self.clone();
        match &mut out {
            EquationSpec::OneD(s) => s.target_time = t,
            EquationSpec::NavierStokes(s) => s.target_time = t,
            EquationSpec::Poisson(_) => {}
        }
        out
    }

    pub fn validate(&self) -> Result<(), TokenError> {
        let t = self.target_time();
        if !(t.is_finite() && t >= 0.0) {
            return Err(TokenError::InvalidSpec(format!("target time {t} must be finite and >= 0")));
        }
        match self {
            EquationSpec::OneD(s) => {
                if !s.family.is_1d() {
                    return Err(TokenError::InvalidSpec(format!("{} is not a 1D family", s.family.name())));
                }
                for (name, v) in [("alpha", s.alpha), ("beta", s.beta), ("gamma", s.gamma)] {
                    if !v.is_finite() {
                        return Err(TokenError::InvalidSpec(format!("{name} = {v} is not finite")));
                    }
                }
                s.forcing.validate().map_err(|e| TokenError::InvalidSpec(e.to_string()))
            }
            EquationSpec::NavierStokes(s) => {
                if !(s.nu > 0.0 && s.nu.is_finite() && s.amp.is_finite()) {
                    return Err(TokenError::InvalidSpec(format!("nu = {}, A = {}", s.nu, s.amp)));
                }
                Ok(())
            }
            EquationSpec::Poisson(p) => p.validate_values().map_err(|e| TokenError::InvalidSpec(e.to_string())),
        }
    }
}

/// Fixed-length id sequence plus its `[-1, 1]` view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<i32>,
    pub true_length: usize,
    pub normalized: Vec<f64>,
}

impl TokenSequence {
    fn from_ids(ids: &[u32], pad_to: usize, vocab: &Vocabulary) -> Result<Self, TokenError> {
        if ids.len() > pad_to {
            return Err(TokenError::Overflow { required: ids.len(), pad_to });
        }
        let mut padded: Vec<i32> = ids.iter().map(|&i| i as i32).collect();
        padded.resize(pad_to, vocab.pad_id() as i32);
        let normalized = padded.iter().map(|&i| vocab.normalize_id(i as u32)).collect();
        Ok(Self { ids: padded, true_length: ids.len(), normalized })
    }

    /// Rebuilds a sequence from stored ids, checking them against `vocab`.
    pub fn from_stored(ids: Vec<i32>, vocab: &Vocabulary) -> Result<Self, TokenError> {
        let pad = vocab.pad_id() as i32;
        for &id in &ids {
            if id < 0 || id as usize >= vocab.len() {
                return Err(TokenError::UnknownId(id as i64));
            }
        }
        let true_length = ids.iter().rposition(|&i| i != pad).map_or(0, |p| p + 1);
        let normalized = ids.iter().map(|&i| vocab.normalize_id(i as u32)).collect();
        Ok(Self { ids, true_length, normalized })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Renders `spec` into token strings (sections joined by `&`, unpadded).
pub fn render_tokens(spec: &EquationSpec) -> Result<Vec<&'static str>, TokenError> {
    spec.validate()?;
    let sections = match spec {
        EquationSpec::OneD(s) => render_1d(s)?,
        EquationSpec::NavierStokes(s) => render_ns(s)?,
        EquationSpec::Poisson(p) => render_poisson(p)?,
    };
    let mut out = Vec::new();
    for (i, section) in sections.into_iter().enumerate() {
        if i > 0 {
            out.push("&");
        }
        out.extend(section);
    }
    Ok(out)
}

/// Tokenizes an equation spec and pads it to `pad_to` ids.
pub fn tokenize_equation(spec: &EquationSpec, pad_to: usize) -> Result<TokenSequence, TokenError> {
    let vocab = Vocabulary::canonical();
    let toks = render_tokens(spec)?;
    let ids = strings_to_ids(&toks, vocab)?;
    TokenSequence::from_ids(&ids, pad_to, vocab)
}

/// Tokenizes an arbitrary symbol run, e.g. the worked example
/// `Derivative(u(x,t), t)`.
pub fn tokenize_symbols(symbols: &[&str], pad_to: usize) -> Result<TokenSequence, TokenError> {
    let vocab = Vocabulary::canonical();
    let ids = strings_to_ids(symbols, vocab)?;
    TokenSequence::from_ids(&ids, pad_to, vocab)
}

/// Lexes detokenized text back into a padded sequence.
pub fn tokenize_text(text: &str, pad_to: usize) -> Result<TokenSequence, TokenError> {
    let vocab = Vocabulary::canonical();
    let ids = vocab.lex(text)?;
    TokenSequence::from_ids(&ids, pad_to, vocab)
}

/// Concatenates the token strings of `seq`, dropping padding.
pub fn detokenize(seq: &TokenSequence) -> Result<String, TokenError> {
    let vocab = Vocabulary::canonical();
    let mut out = String::new();
    for &id in &seq.ids {
        if id < 0 {
            return Err(TokenError::UnknownId(id as i64));
        }
        let tok = vocab.token(id as u32).ok_or(TokenError::UnknownId(id as i64))?;
        if id as u32 != vocab.pad_id() {
            out.push_str(tok);
        }
    }
    Ok(out)
}

fn strings_to_ids(toks: &[&str], vocab: &Vocabulary) -> Result<Vec<u32>, TokenError> {
    toks.iter()
        .map(|t| {
            vocab.index_of(t).ok_or_else(|| TokenError::UnknownText { offset: 0, snippet: (*t).to_string() })
        })
        .collect()
}

fn num(v: f64) -> Result<Vec<&'static str>, TokenError> {
    tokenize_number(v, DEFAULT_PRECISION)
}

/// `∂(u)/∂x` style derivative of an inner run with respect to `var`.
fn d(inner: Vec<&'static str>, var: &'static str) -> Vec<&'static str> {
    let mut out = vec!["∂", "("];
    out.extend(inner);
    out.extend([")", "/", "∂", var]);
    out
}

fn render_1d(s: &OneDSpec) -> Result<Vec<Vec<&'static str>>, TokenError> {
    let k = 2.0 * std::f64::consts::PI / s.forcing.domain_length;

    // Flux terms with their signed coefficients; zero terms are omitted.
    let terms: [(f64, Vec<&'static str>); 3] = [
        (s.alpha, vec!["u", "*", "u"]),
        (-s.beta, d(vec!["u"], "x")),
        (s.gamma, d(d(vec!["u"], "x"), "x")),
    ];
    let mut flux = Vec::new();
    for (c, term) in terms {
        if c == 0.0 {
            continue;
        }
        if c < 0.0 {
            flux.push("-");
        } else if !flux.is_empty() {
            flux.push("+");
        }
        flux.extend(num(c.abs())?);
        flux.push("*");
        flux.extend(term);
    }
    if flux.is_empty() {
        flux.push("0");
    }
    let mut equation = d(vec!["u"], "t");
    equation.push("+");
    equation.extend(d(flux, "x"));

    let mut forcing = vec!["Σ", "j", "A_j", "*", "sin", "(", "ω_j", "*", "t", "+"];
    forcing.extend(num(k)?);
    forcing.extend(["*", "l_j", "*", "x", "+", "φ_j", ")"]);

    let mut initial = vec!["u", "(", "0", ",", "x", ")", "=", "Σ", "j", "A_j", "*", "sin", "("];
    initial.extend(num(k)?);
    initial.extend(["*", "l_j", "*", "x", "+", "φ_j", ")"]);

    let f = &s.forcing;
    let mut sampled = Vec::new();
    let groups: [(&'static str, Vec<f64>); 4] = [
        ("A_j", f.amplitude.clone()),
        ("ω_j", f.omega.clone()),
        ("l_j", f.wavenumber.iter().map(|&l| f64::from(l)).collect()),
        ("φ_j", f.phase.clone()),
    ];
    for (gi, (name, values)) in groups.into_iter().enumerate() {
        if gi > 0 {
            sampled.push(",");
        }
        sampled.extend([name, "="]);
        for (i, v) in values.into_iter().enumerate() {
            if i > 0 {
                sampled.push(",");
            }
            sampled.extend(num(v)?);
        }
    }

    Ok(vec![equation, forcing, initial, sampled, num(s.target_time)?])
}

fn render_ns(s: &NavierStokesSpec) -> Result<Vec<Vec<&'static str>>, TokenError> {
    let phase = ["2", "*", "π", "*", "(", "x", "+", "y", ")"];
    let mut eq = d(vec!["w"], "t");
    eq.extend(["+", "u", "·", "∇", "w", "=", "ν", "*", "Δ", "w", "+", "A", "*", "(", "sin", "("]);
    eq.extend(phase);
    eq.extend([")", "+", "cos", "("]);
    eq.extend(phase);
    eq.extend([")", ")", ",", "∇", "·", "u", "=", "0"]);

    let mut sampled = num(s.nu)?;
    sampled.push(",");
    sampled.extend(num(s.amp)?);

    Ok(vec![eq, sampled, num(s.target_time)?])
}

fn render_poisson(p: &PoissonSetup) -> Result<Vec<Vec<&'static str>>, TokenError> {
    let eq = vec!["Δ", "u", "=", "g"];

    let mut bc = Vec::new();
    for (i, edge) in p.edges.iter().enumerate() {
        if i > 0 {
            bc.push(",");
        }
        bc.push(match edge.kind {
            BoundaryKind::Dirichlet => "Dirichlet",
            BoundaryKind::Neumann => "Neumann",
        });
        bc.extend(num(edge.value)?);
    }

    let mut plates = Vec::new();
    for (i, plate) in p.plates.iter().enumerate() {
        if i > 0 {
            plates.push(",");
        }
        plates.extend(num(plate.x as f64)?);
        plates.push(",");
        plates.extend(num(plate.y as f64)?);
        plates.push(",");
        plates.extend(num(plate.width as f64)?);
        plates.push(",");
        plates.extend(num(plate.charge)?);
    }
    if plates.is_empty() {
        plates.push("None");
    }

    Ok(vec![eq, bc, plates, num(STEADY_STATE_TIME)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde2d::poisson::{EdgeCondition, Plate};

    pub(crate) fn heat_spec() -> EquationSpec {
        EquationSpec::OneD(OneDSpec {
            family: Family::Heat,
            alpha: 0.0,
            beta: 0.1,
            gamma: 0.0,
            forcing: ForcingParams::new(
                vec![0.1, -0.2, 0.05, 0.0, 0.25],
                vec![0.3, -0.1, 0.0, 0.4, -0.4],
                vec![1, 2, 3, 1, 2],
                vec![0.0, 1.0, 2.0, 3.0, 6.0],
                16.0,
            )
            .unwrap(),
            target_time: 4.0,
        })
    }

    #[test]
    fn worked_example_symbols() {
        let symbols = ["Derivative", "(", "u", "(", "x", ",", "t", ")", ",", "t", ")"];
        let seq = tokenize_symbols(&symbols, 16).unwrap();
        let v = Vocabulary::canonical();
        let expected: Vec<i32> = symbols.iter().map(|s| v.index_of(s).unwrap() as i32).collect();
        assert_eq!(&seq.ids[..11], expected.as_slice());
        assert_eq!(seq.true_length, 11);
        assert!(seq.ids[11..].iter().all(|&i| i == v.pad_id() as i32));
        assert_eq!(detokenize(&seq).unwrap(), "Derivative(u(x,t),t)");
    }

    #[test]
    fn heat_spec_sections_and_padding() {
        let spec = heat_spec();
        let seq = tokenize_equation(&spec, PAD_1D).unwrap();
        assert_eq!(seq.len(), PAD_1D);
        let text = detokenize(&seq).unwrap();
        assert_eq!(text.matches('&').count(), 4);
        assert!(text.starts_with("∂(u)/∂t+∂(-0.1*∂(u)/∂x)/∂x&"));
        assert!(text.ends_with("&4"));
        let again = tokenize_text(&text, PAD_1D).unwrap();
        assert_eq!(again.ids, seq.ids);
    }

    #[test]
    fn all_padding_detokenizes_to_empty() {
        let v = Vocabulary::canonical();
        let seq = TokenSequence::from_stored(vec![v.pad_id() as i32; PAD_2D], v).unwrap();
        assert_eq!(seq.true_length, 0);
        assert_eq!(detokenize(&seq).unwrap(), "");
    }

    #[test]
    fn overflow_reports_required_length() {
        let err = tokenize_equation(&heat_spec(), 20).unwrap_err();
        match err {
            TokenError::Overflow { required, pad_to } => {
                assert_eq!(pad_to, 20);
                assert!(required > 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_id_rejected() {
        let mut seq = tokenize_equation(&heat_spec(), PAD_1D).unwrap();
        seq.ids[3] = 10_000;
        assert!(matches!(detokenize(&seq), Err(TokenError::UnknownId(10_000))));
        seq.ids[3] = -1;
        assert!(matches!(detokenize(&seq), Err(TokenError::UnknownId(-1))));
    }

    #[test]
    fn ns_and_poisson_render() {
        let ns = EquationSpec::NavierStokes(NavierStokesSpec { nu: 3e-9, amp: 0.004, target_time: 12.25 });
        let seq = tokenize_equation(&ns, PAD_2D).unwrap();
        let text = detokenize(&seq).unwrap();
        assert!(text.ends_with("&3E-9,0.004&12.25"), "{text}");

        let poisson = EquationSpec::Poisson(PoissonSetup {
            edges: [
                EdgeCondition::dirichlet(0.0),
                EdgeCondition::neumann(0.0),
                EdgeCondition::dirichlet(0.0),
                EdgeCondition::neumann(0.0),
            ],
            plates: vec![Plate { x: 20, y: 20, width: 30, charge: 0.75 }, Plate { x: 40, y: 40, width: 25, charge: -1.0 }],
        });
        let seq = tokenize_equation(&poisson, PAD_2D).unwrap();
        let text = detokenize(&seq).unwrap();
        assert_eq!(text, "Δu=g&Dirichlet0,Neumann0,Dirichlet0,Neumann0&20,20,30,0.75,40,40,25,-1&1");
        assert_eq!(poisson.with_target_time(7.0).target_time(), 1.0);
    }

    #[test]
    fn invalid_time_rejected() {
        let spec = heat_spec().with_target_time(-1.0);
        assert!(matches!(tokenize_equation(&spec, PAD_1D), Err(TokenError::InvalidSpec(_))));
    }
}
