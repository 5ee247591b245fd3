//! Scalar primitives used as building blocks of evolved activation functions.
//!
//! The standard set contains ten activation functions and five binary math
//! operations. Function indices inside a genome refer to positions in a
//! [`PrimitiveSet`], so the order of every registered set is fixed.
//!
//! | Name       | Forward                                   | Default parameters      | Derivative at the kinks            |
//! |------------|-------------------------------------------|-------------------------|------------------------------------|
//! | ReLU       | `max(x, 0)`                               |                         | `f'(0) = 0`                        |
//! | Tanh       | `tanh(x)`                                 |                         | smooth                             |
//! | LeakyReLU  | `x` if `x >= 0`, else `s * x`             | `s = 0.01`              | `f'(0) = s`                        |
//! | ELU        | `x` if `x > 0`, else `a * (e^x - 1)`      | `a = 1`                 | `f'(0) = 1`                        |
//! | HardShrink | `x` if `abs(x) > l`, else `0`             | `l = 0.5`               | `f'(+-l) = 0`                      |
//! | CELU       | `max(0, x) + min(0, a * (e^(x/a) - 1))`   | `a = 1`                 | `f'(0) = 1`                        |
//! | Hardtanh   | `clamp(x, -1, 1)`                         | bounds `-1`, `1`        | `f'(+-1) = 0`                      |
//! | Hardswish  | `0` if `x <= -3`, `x` if `x >= 3`, else `x * (x + 3) / 6` |         | `f'(-3) = 0`, `f'(3) = 1`          |
//! | Softshrink | `x - l` if `x > l`, `x + l` if `x < -l`, else `0` | `l = 0.5`       | `f'(+-l) = 0`                      |
//! | RReLU      | `x` if `x >= 0`, else `a * x`             | `a ~ U[1/8, 1/3]` (train), `a = 11/48` (eval) | `f'(0) = a`  |
//! | Max        | `max(x, y)`                               |                         | ties route to `x`                  |
//! | Min        | `min(x, y)`                               |                         | ties route to `x`                  |
//! | Add        | `x + y`                                   |                         | `(1, 1)`                           |
//! | Sub        | `x - y`                                   |                         | `(1, -1)`                          |
//! | Mul        | `x * y`                                   |                         | `(y, x)`                           |
//!
//! A second, four-entry `elementary` set (Add, Mul, Recip, Exp) exists for
//! small worked examples such as the logistic-sigmoid genome.
//!
//! NaN inputs propagate through every primitive. Overflow saturates to
//! infinity.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

pub const NEGATIVE_SLOPE: f64 = 0.01;
pub const ELU_ALPHA: f64 = 1.0;
pub const CELU_ALPHA: f64 = 1.0;
pub const SHRINK_LAMBDA: f64 = 0.5;
pub const RRELU_LOWER: f64 = 1.0 / 8.0;
pub const RRELU_UPPER: f64 = 1.0 / 3.0;

/// Whether stochastic primitives sample (`Train`) or use their expectation (`Eval`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameters drawn during a forward call that the matching backward call needs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampledParams {
    pub rrelu_slope: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Relu,
    Tanh,
    LeakyRelu { negative_slope: f64 },
    Elu { alpha: f64 },
    HardShrink { lambda: f64 },
    Celu { alpha: f64 },
    Hardtanh { min_val: f64, max_val: f64 },
    Hardswish,
    Softshrink { lambda: f64 },
    Rrelu { lower: f64, upper: f64 },
    Max,
    Min,
    Add,
    Sub,
    Mul,
    Recip,
    Exp,
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a >= b {
        a
    } else {
        b
    }
}

fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a <= b {
        a
    } else {
        b
    }
}

impl Op {
    pub fn arity(&self) -> usize {
        match self {
            Op::Max | Op::Min | Op::Add | Op::Sub | Op::Mul => 2,
            _ => 1,
        }
    }

    /// Slope used by RReLU in eval mode.
    pub fn rrelu_eval_slope(lower: f64, upper: f64) -> f64 {
        (lower + upper) / 2.0
    }

    /// Forward value. `slope` is only read by RReLU.
    #[inline]
    pub fn value(&self, a: f64, b: f64, slope: f64) -> f64 {
        match *self {
            Op::Relu => {
                if a > 0.0 || a.is_nan() {
                    a
                } else {
                    0.0
                }
            }
            Op::Tanh => a.tanh(),
            Op::LeakyRelu { negative_slope } => {
                if a >= 0.0 {
                    a
                } else {
                    negative_slope * a
                }
            }
            Op::Elu { alpha } => {
                if a > 0.0 {
                    a
                } else {
                    alpha * a.exp_m1()
                }
            }
            Op::HardShrink { lambda } => {
                if (-lambda..=lambda).contains(&a) {
                    0.0
                } else {
                    a
                }
            }
            Op::Celu { alpha } => {
                if a > 0.0 {
                    a
                } else {
                    alpha * (a / alpha).exp_m1()
                }
            }
            Op::Hardtanh { min_val, max_val } => {
                if a > max_val {
                    max_val
                } else if a < min_val {
                    min_val
                } else {
                    a
                }
            }
            Op::Hardswish => {
                if a <= -3.0 {
                    0.0
                } else if a >= 3.0 {
                    a
                } else {
                    a * (a + 3.0) / 6.0
                }
            }
            Op::Softshrink { lambda } => {
                if (-lambda..=lambda).contains(&a) {
                    0.0
                } else if a > lambda {
                    a - lambda
                } else {
                    a + lambda
                }
            }
            Op::Rrelu { .. } => {
                if a >= 0.0 {
                    a
                } else {
                    slope * a
                }
            }
            Op::Max => nan_max(a, b),
            Op::Min => nan_min(a, b),
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Recip => 1.0 / a,
            Op::Exp => a.exp(),
        }
    }

    /// Partial derivatives with respect to both operands (the second is zero for
    /// unary ops). Kink points follow the conventions in the module table.
    #[inline]
    pub fn grad(&self, a: f64, b: f64, slope: f64) -> (f64, f64) {
        match *self {
            Op::Relu => (if a > 0.0 { 1.0 } else { 0.0 }, 0.0),
            Op::Tanh => {
                let t = a.tanh();
                (1.0 - t * t, 0.0)
            }
            Op::LeakyRelu { negative_slope } => (if a > 0.0 { 1.0 } else { negative_slope }, 0.0),
            Op::Elu { alpha } => (if a >= 0.0 { 1.0 } else { alpha * a.exp() }, 0.0),
            Op::HardShrink { lambda } | Op::Softshrink { lambda } => {
                (if a > lambda || a < -lambda { 1.0 } else { 0.0 }, 0.0)
            }
            Op::Celu { alpha } => (if a >= 0.0 { 1.0 } else { (a / alpha).exp() }, 0.0),
            Op::Hardtanh { min_val, max_val } => {
                (if a > min_val && a < max_val { 1.0 } else { 0.0 }, 0.0)
            }
            Op::Hardswish => {
                let d = if a <= -3.0 {
                    0.0
                } else if a >= 3.0 {
                    1.0
                } else {
                    (2.0 * a + 3.0) / 6.0
                };
                (d, 0.0)
            }
            Op::Rrelu { .. } => (if a > 0.0 { 1.0 } else { slope }, 0.0),
            Op::Max => {
                if a >= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Op::Min => {
                if a <= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Op::Add => (1.0, 1.0),
            Op::Sub => (1.0, -1.0),
            Op::Mul => (b, a),
            Op::Recip => (-1.0 / (a * a), 0.0),
            Op::Exp => (a.exp(), 0.0),
        }
    }

    /// Slope for an RReLU call: sampled in train mode, the midpoint in eval mode.
    /// Other ops return 0 without touching the rng.
    #[inline]
    pub fn draw_slope<R: Rng + ?Sized>(&self, mode: Mode, rng: &mut R) -> f64 {
        match *self {
            Op::Rrelu { lower, upper } => match mode {
                Mode::Train => rng.random_range(lower..upper),
                Mode::Eval => Op::rrelu_eval_slope(lower, upper),
            },
            _ => 0.0,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Op::Rrelu { .. })
    }

    /// Input values where the first operand's derivative switches branch.
    pub fn kink_points(&self) -> Vec<f64> {
        match *self {
            Op::Relu | Op::LeakyRelu { .. } | Op::Elu { .. } | Op::Celu { .. } | Op::Rrelu { .. } => {
                vec![0.0]
            }
            Op::HardShrink { lambda } | Op::Softshrink { lambda } => vec![-lambda, lambda],
            Op::Hardtanh { min_val, max_val } => vec![min_val, max_val],
            Op::Hardswish => vec![-3.0, 3.0],
            // Recip has a pole rather than a kink.
            Op::Recip => vec![0.0],
            Op::Tanh | Op::Exp | Op::Max | Op::Min | Op::Add | Op::Sub | Op::Mul => vec![],
        }
    }

    /// True when `args` sit within `eps` of a point where the derivative is
    /// not classically defined. Max and Min kink along the diagonal.
    pub fn near_kink(&self, a: f64, b: f64, eps: f64) -> bool {
        match self {
            Op::Max | Op::Min => (a - b).abs() < eps,
            _ => self.kink_points().iter().any(|k| (a - k).abs() < eps),
        }
    }
}

/// A named primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub name: &'static str,
    pub op: Op,
}

impl Primitive {
    pub const fn new(name: &'static str, op: Op) -> Self {
        Self { name, op }
    }

    pub fn arity(&self) -> usize {
        self.op.arity()
    }

    pub fn kink_points(&self) -> Vec<f64> {
        self.op.kink_points()
    }

    /// Evaluates the primitive on `args` (length equal to the arity).
    ///
    /// The rng is only consulted by RReLU in train mode. The returned
    /// [`SampledParams`] must be handed to [`Primitive::partials`] for the
    /// matching backward pass.
    pub fn forward<R: Rng + ?Sized>(&self, args: &[f64], mode: Mode, rng: &mut R) -> (f64, SampledParams) {
        assert_eq!(args.len(), self.arity(), "{} takes {} argument(s)", self.name, self.arity());
        let slope = self.op.draw_slope(mode, rng);
        let b = args.get(1).copied().unwrap_or(0.0);
        let sampled = SampledParams {
            rrelu_slope: self.op.is_stochastic().then_some(slope),
        };
        (self.op.value(args[0], b, slope), sampled)
    }

    /// Deterministic eval-mode forward.
    pub fn eval(&self, args: &[f64]) -> f64 {
        assert_eq!(args.len(), self.arity(), "{} takes {} argument(s)", self.name, self.arity());
        let slope = match self.op {
            Op::Rrelu { lower, upper } => Op::rrelu_eval_slope(lower, upper),
            _ => 0.0,
        };
        self.op.value(args[0], args.get(1).copied().unwrap_or(0.0), slope)
    }

    /// One partial derivative per argument.
    pub fn partials(&self, args: &[f64], sampled: SampledParams) -> Vec<f64> {
        assert_eq!(args.len(), self.arity(), "{} takes {} argument(s)", self.name, self.arity());
        let slope = match self.op {
            Op::Rrelu { lower, upper } => sampled
                .rrelu_slope
                .unwrap_or_else(|| Op::rrelu_eval_slope(lower, upper)),
            _ => 0.0,
        };
        let (da, db) = self.op.grad(args[0], args.get(1).copied().unwrap_or(0.0), slope);
        if self.arity() == 1 {
            vec![da]
        } else {
            vec![da, db]
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

pub const RELU: Primitive = Primitive::new("ReLU", Op::Relu);
pub const TANH: Primitive = Primitive::new("Tanh", Op::Tanh);
pub const LEAKY_RELU: Primitive = Primitive::new(
    "LeakyReLU",
    Op::LeakyRelu {
        negative_slope: NEGATIVE_SLOPE,
    },
);
pub const ELU: Primitive = Primitive::new("ELU", Op::Elu { alpha: ELU_ALPHA });
pub const HARD_SHRINK: Primitive = Primitive::new("HardShrink", Op::HardShrink { lambda: SHRINK_LAMBDA });
pub const CELU: Primitive = Primitive::new("CELU", Op::Celu { alpha: CELU_ALPHA });
pub const HARDTANH: Primitive = Primitive::new(
    "Hardtanh",
    Op::Hardtanh {
        min_val: -1.0,
        max_val: 1.0,
    },
);
pub const HARDSWISH: Primitive = Primitive::new("Hardswish", Op::Hardswish);
pub const SOFTSHRINK: Primitive = Primitive::new("Softshrink", Op::Softshrink { lambda: SHRINK_LAMBDA });
pub const RRELU: Primitive = Primitive::new(
    "RReLU",
    Op::Rrelu {
        lower: RRELU_LOWER,
        upper: RRELU_UPPER,
    },
);
pub const MAX: Primitive = Primitive::new("Max", Op::Max);
pub const MIN: Primitive = Primitive::new("Min", Op::Min);
pub const ADD: Primitive = Primitive::new("Add", Op::Add);
pub const SUB: Primitive = Primitive::new("Sub", Op::Sub);
pub const MUL: Primitive = Primitive::new("Mul", Op::Mul);
pub const RECIP: Primitive = Primitive::new("Recip", Op::Recip);
pub const EXP: Primitive = Primitive::new("Exp", Op::Exp);

pub const STANDARD_SET_NAME: &str = "standard";
pub const ELEMENTARY_SET_NAME: &str = "elementary";

/// An ordered, versioned list of primitives. Two sets are equal when their
/// name and version agree.
#[derive(Debug, Clone)]
pub struct PrimitiveSet {
    name: String,
    version: u32,
    primitives: Vec<Primitive>,
}

impl PartialEq for PrimitiveSet {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.version == other.version
    }
}

impl PrimitiveSet {
    /// Builds a custom set. Names must be unique and the list non-empty.
    pub fn new(name: impl Into<String>, version: u32, primitives: Vec<Primitive>) -> Result<Self> {
        let name = name.into();
        if primitives.is_empty() {
            return Err(Error::Config(format!("primitive set {name} is empty")));
        }
        for (i, p) in primitives.iter().enumerate() {
            if primitives[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Config(format!("duplicate primitive {} in set {name}", p.name)));
            }
        }
        Ok(Self {
            name,
            version,
            primitives,
        })
    }

    /// The fifteen-entry activation-search set.
    pub fn standard() -> Arc<Self> {
        Arc::new(Self {
            name: STANDARD_SET_NAME.into(),
            version: 1,
            primitives: vec![
                RELU,
                TANH,
                LEAKY_RELU,
                ELU,
                HARD_SHRINK,
                CELU,
                HARDTANH,
                HARDSWISH,
                SOFTSHRINK,
                RRELU,
                MAX,
                MIN,
                ADD,
                SUB,
                MUL,
            ],
        })
    }

    /// `0: Add, 1: Mul, 2: Recip, 3: Exp`.
    pub fn elementary() -> Arc<Self> {
        Arc::new(Self {
            name: ELEMENTARY_SET_NAME.into(),
            version: 1,
            primitives: vec![ADD, MUL, RECIP, EXP],
        })
    }

    /// Resolves a registered set by the identifier stored in serialized genomes.
    pub fn lookup(name: &str, version: u32) -> Result<Arc<Self>> {
        let set = match name {
            STANDARD_SET_NAME => Self::standard(),
            ELEMENTARY_SET_NAME => Self::elementary(),
            _ => return Err(Error::Format(format!("unknown primitive set '{name}'"))),
        };
        if set.version != version {
            return Err(Error::Format(format!(
                "unsupported version {version} of primitive set '{name}' (have {})",
                set.version
            )));
        }
        Ok(set)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// `name/version`, as written into genome files.
    pub fn id(&self) -> String {
        format!("{}/{}", self.name, self.version)
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&Primitive> {
        self.primitives.get(idx)
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.primitives.iter().position(|p| p.name.eq_ignore_ascii_case(name))
    }
}

/// Looks up a primitive of the standard set by (case-insensitive) name.
pub fn standard_primitive(name: &str) -> Option<Primitive> {
    let set = PrimitiveSet::standard();
    set.index_of(name).and_then(|i| set.get(i).copied())
}
