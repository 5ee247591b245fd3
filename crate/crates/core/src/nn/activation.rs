use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::afprims::{standard_primitive, Mode, Primitive};
use crate::cgp::{decode, deserialize_genome, serialize_genome, CompiledAf, Genome};
use crate::error::{Error, Result};

/// Values converted to f64 per activation call.
const CHUNK: usize = 1024;

/// An elementwise activation: a unary baseline primitive or an evolved program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActivationRepr", into = "ActivationRepr")]
pub enum ScalarActivation {
    Primitive(Primitive),
    Program(Arc<CompiledAf>),
}

impl ScalarActivation {
    /// A unary primitive of the standard set, by case-insensitive name.
    pub fn primitive(name: &str) -> Result<Self> {
        let p = standard_primitive(name).ok_or_else(|| Error::Config(format!("unknown primitive '{name}'")))?;
        if p.arity() != 1 {
            return Err(Error::Config(format!("'{}' is not a unary activation", p.name)));
        }
        Ok(Self::Primitive(p))
    }

    pub fn program(genome: &Genome) -> Self {
        Self::Program(Arc::new(decode(genome)))
    }

    pub fn expression(&self) -> String {
        match self {
            Self::Primitive(p) => format!("{}(x)", p.name),
            Self::Program(af) => af.expression().to_string(),
        }
    }

    pub fn genome(&self) -> Option<&Genome> {
        match self {
            Self::Primitive(_) => None,
            Self::Program(af) => Some(af.genome()),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        match self {
            Self::Primitive(p) => p.op.is_stochastic(),
            Self::Program(af) => af.has_stochastic_nodes(),
        }
    }

    /// Eval-mode value.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// Eval-mode value and derivative.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        match self {
            Self::Primitive(p) => {
                let slope = eval_slope(p);
                (p.op.value(x, 0.0, slope), p.op.grad(x, 0.0, slope).0)
            }
            Self::Program(af) => af.eval_with_derivative(x),
        }
    }

    /// Applies the activation in place. When `deriv` is given it receives
    /// f'(x) at each pre-activation, using the same stochastic draws as the
    /// forward value.
    pub fn apply<T: Real, R: Rng + ?Sized>(&self, xs: &mut [T], mut deriv: Option<&mut [T]>, mode: Mode, rng: &mut R) {
        if let Some(d) = deriv.as_deref() {
            assert_eq!(d.len(), xs.len(), "derivative buffer length");
        }
        match self {
            Self::Primitive(p) => {
                let op = p.op;
                let sampled = mode == Mode::Train && op.is_stochastic();
                let fixed = eval_slope(p);
                for (i, x) in xs.iter_mut().enumerate() {
                    let s = if sampled { op.draw_slope(mode, rng) } else { fixed };
                    let a = x.as_f64();
                    *x = T::of(op.value(a, 0.0, s));
                    if let Some(d) = deriv.as_deref_mut() {
                        d[i] = T::of(op.grad(a, 0.0, s).0);
                    }
                }
            }
            Self::Program(af) => {
                let mut inp = vec![0.0f64; CHUNK];
                let mut out = vec![0.0f64; CHUNK];
                let mut der = vec![0.0f64; if deriv.is_some() { CHUNK } else { 0 }];
                for start in (0..xs.len()).step_by(CHUNK) {
                    let len = CHUNK.min(xs.len() - start);
                    for (dst, src) in inp[..len].iter_mut().zip(&xs[start..start + len]) {
                        *dst = src.as_f64();
                    }
                    let d_buf = deriv.is_some().then(|| &mut der[..len]);
                    af.eval_slice(&inp[..len], &mut out[..len], d_buf, mode, rng);
                    for (dst, src) in xs[start..start + len].iter_mut().zip(&out[..len]) {
                        *dst = T::of(*src);
                    }
                    if let Some(d) = deriv.as_deref_mut() {
                        for (dst, src) in d[start..start + len].iter_mut().zip(&der[..len]) {
                            *dst = T::of(*src);
                        }
                    }
                }
            }
        }
    }
}

fn eval_slope(p: &Primitive) -> f64 {
    match p.op {
        crate::afprims::Op::Rrelu { lower, upper } => crate::afprims::Op::rrelu_eval_slope(lower, upper),
        _ => 0.0,
    }
}

impl fmt::Display for ScalarActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expression())
    }
}

/// Serialized form: either a primitive name or a genome in the text format.
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActivationRepr {
    Primitive(String),
    Genome(String),
}

impl From<ScalarActivation> for ActivationRepr {
    fn from(a: ScalarActivation) -> Self {
        match a {
            ScalarActivation::Primitive(p) => ActivationRepr::Primitive(p.name.to_string()),
            ScalarActivation::Program(af) => ActivationRepr::Genome(serialize_genome(af.genome())),
        }
    }
}

impl TryFrom<ActivationRepr> for ScalarActivation {
    type Error = Error;

    fn try_from(r: ActivationRepr) -> Result<Self> {
        match r {
            ActivationRepr::Primitive(name) => ScalarActivation::primitive(&name),
            ActivationRepr::Genome(text) => Ok(ScalarActivation::program(&deserialize_genome(&text)?)),
        }
    }
}

/// Position of an activation inside a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Input,
    Hidden,
    Output,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Input, Role::Hidden, Role::Output];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Hidden => "hidden",
            Role::Output => "output",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The activations used at the input, hidden and output positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfTriple {
    pub input: ScalarActivation,
    pub hidden: ScalarActivation,
    pub output: ScalarActivation,
}

impl AfTriple {
    pub fn new(input: ScalarActivation, hidden: ScalarActivation, output: ScalarActivation) -> Self {
        Self { input, hidden, output }
    }

    pub fn uniform(af: ScalarActivation) -> Self {
        Self::new(af.clone(), af.clone(), af)
    }

    pub fn from_genomes(genomes: [&Genome; 3]) -> Self {
        Self::new(
            ScalarActivation::program(genomes[0]),
            ScalarActivation::program(genomes[1]),
            ScalarActivation::program(genomes[2]),
        )
    }

    pub fn get(&self, role: Role) -> &ScalarActivation {
        match role {
            Role::Input => &self.input,
            Role::Hidden => &self.hidden,
            Role::Output => &self.output,
        }
    }

    pub fn with(&self, role: Role, af: ScalarActivation) -> Self {
        let mut t = self.clone();
        match role {
            Role::Input => t.input = af,
            Role::Hidden => t.hidden = af,
            Role::Output => t.output = af,
        }
        t
    }

    pub fn expressions(&self) -> [String; 3] {
        Role::ALL.map(|r| self.get(r).expression())
    }
}

impl fmt::Display for AfTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [i, h, o] = self.expressions();
        write!(f, "{{{i}, {h}, {o}}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afprims::PrimitiveSet;
    use crate::cgp::CgpConfig;
    use crate::seed::rng_from_seed;

    #[test]
    fn primitive_activation_matches_program_of_same_primitive() {
        let mut rng = rng_from_seed(1);
        for name in ["ReLU", "Tanh", "ELU", "Hardswish", "RReLU"] {
            let g = Genome::from_primitive(name, CgpConfig::default(), PrimitiveSet::standard(), &mut rng).unwrap();
            let (a, b) = (ScalarActivation::primitive(name).unwrap(), ScalarActivation::program(&g));
            assert_eq!(a.expression(), b.expression());
            let mut xa: Vec<f32> = (-40..40).map(|i| i as f32 * 0.125).collect();
            let mut xb = xa.clone();
            let (mut da, mut db) = (vec![0.0; xa.len()], vec![0.0; xa.len()]);
            a.apply(&mut xa, Some(&mut da), Mode::Eval, &mut rng);
            b.apply(&mut xb, Some(&mut db), Mode::Eval, &mut rng);
            assert_eq!(xa, xb, "{name}");
            assert_eq!(da, db, "{name}");
        }
    }

    #[test]
    fn binary_primitives_are_not_activations() {
        assert!(ScalarActivation::primitive("Max").is_err());
        assert!(ScalarActivation::primitive("nope").is_err());
        assert!(ScalarActivation::primitive("leakyrelu").is_ok());
    }

    #[test]
    fn train_mode_rrelu_derivative_matches_drawn_slope() {
        let a = ScalarActivation::primitive("RReLU").unwrap();
        let mut xs = vec![-2.0f64; 64];
        let mut d = vec![0.0; 64];
        a.apply(&mut xs, Some(&mut d), Mode::Train, &mut rng_from_seed(4));
        for (x, s) in xs.iter().zip(&d) {
            assert!((x - (-2.0 * s)).abs() < 1e-15);
        }
        assert!(d.windows(2).any(|w| w[0] != w[1]), "slopes are drawn per element");
    }

    #[test]
    fn triple_serde_round_trip() {
        let mut rng = rng_from_seed(9);
        let g = Genome::random(CgpConfig::default(), PrimitiveSet::standard(), &mut rng).unwrap();
        let t = AfTriple::new(
            ScalarActivation::primitive("ReLU").unwrap(),
            ScalarActivation::program(&g),
            ScalarActivation::primitive("LeakyReLU").unwrap(),
        );
        let json = serde_json::to_string(&t).unwrap();
        let back: AfTriple = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.expressions(), t.expressions());
    }
}
