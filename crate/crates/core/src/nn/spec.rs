use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::activation::{AfTriple, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Fcn,
    Cnn,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Fcn => "fcn",
            ArchKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fcn" => Ok(ArchKind::Fcn),
            "cnn" => Ok(ArchKind::Cnn),
            _ => Err(Error::Config(format!("unknown architecture '{s}' (expected fcn or cnn)"))),
        }
    }
}

/// Layer sizes of the two network families. [`Architecture::fcn`] and
/// [`Architecture::cnn`] give the standard sizes; smaller variants exist for
/// gradient checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `Linear(D -> first) -> in_af -> [Linear(-> hidden) -> hid_af] x hidden_layers
    /// -> Linear(-> classes) -> out_af`, where `first` defaults to `D`.
    Fcn {
        first_width: Option<usize>,
        hidden_width: usize,
        hidden_layers: usize,
    },
    /// `conv -> in_af -> pool -> conv -> hid_af -> pool -> dropout -> flatten
    /// -> Linear(F -> fc_width) -> out_af -> Linear(-> fc2_width) -> Linear(-> classes)`,
    /// where `F` is the flattened size and `fc_width` defaults to `F`.
    Cnn {
        channels: [usize; 2],
        kernel: usize,
        pool: usize,
        pool_stride: usize,
        dropout: f64,
        fc_width: Option<usize>,
        fc2_width: usize,
    },
}

impl Architecture {
    pub fn fcn() -> Self {
        Architecture::Fcn {
            first_width: None,
            hidden_width: 32,
            hidden_layers: 5,
        }
    }

    pub fn cnn() -> Self {
        Architecture::Cnn {
            channels: [32, 64],
            kernel: 3,
            pool: 3,
            pool_stride: 2,
            dropout: 0.5,
            fc_width: None,
            fc2_width: 1000,
        }
    }

    pub fn standard(kind: ArchKind) -> Self {
        match kind {
            ArchKind::Fcn => Self::fcn(),
            ArchKind::Cnn => Self::cnn(),
        }
    }

    pub fn kind(&self) -> ArchKind {
        match self {
            Architecture::Fcn { .. } => ArchKind::Fcn,
            Architecture::Cnn { .. } => ArchKind::Cnn,
        }
    }
}

/// Everything needed to build a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: Architecture,
    pub af_triple: AfTriple,
    /// `(channels, height, width)`.
    pub input_dims: [usize; 3],
    pub n_classes: usize,
}

impl NetworkSpec {
    pub fn new(arch: Architecture, af_triple: AfTriple, input_dims: [usize; 3], n_classes: usize) -> Self {
        Self {
            arch,
            af_triple,
            input_dims,
            n_classes,
        }
    }

    /// Resolves the layer sequence, inferring widths from the input shape.
    pub fn plan(&self) -> Result<Vec<LayerPlan>> {
        let [c, h, w] = self.input_dims;
        if c == 0 || h == 0 || w == 0 || self.n_classes == 0 {
            return Err(Error::Config(format!(
                "input dims {:?} and class count {} must be positive",
                self.input_dims, self.n_classes
            )));
        }
        let mut plan = Vec::new();
        match &self.arch {
            &Architecture::Fcn {
                first_width,
                hidden_width,
                hidden_layers,
            } => {
                let d = c * h * w;
                let first = first_width.unwrap_or(d);
                if first == 0 || hidden_width == 0 {
                    return Err(Error::Config("layer widths must be positive".into()));
                }
                plan.push(LayerPlan::Linear { inputs: d, outputs: first });
                plan.push(LayerPlan::Activation(Role::Input));
                let mut width = first;
                for _ in 0..hidden_layers {
                    plan.push(LayerPlan::Linear {
                        inputs: width,
                        outputs: hidden_width,
                    });
                    plan.push(LayerPlan::Activation(Role::Hidden));
                    width = hidden_width;
                }
                plan.push(LayerPlan::Linear {
                    inputs: width,
                    outputs: self.n_classes,
                });
                plan.push(LayerPlan::Activation(Role::Output));
            }
            &Architecture::Cnn {
                channels,
                kernel,
                pool,
                pool_stride,
                dropout,
                fc_width,
                fc2_width,
            } => {
                if kernel == 0 || pool == 0 || pool_stride == 0 || channels.contains(&0) || fc2_width == 0 {
                    return Err(Error::Config("CNN sizes must be positive".into()));
                }
                if !(0.0..1.0).contains(&dropout) {
                    return Err(Error::Config(format!("dropout probability {dropout} outside [0, 1)")));
                }
                let too_small = || {
                    Error::Config(format!(
                        "input {h}x{w} is too small for two {kernel}x{kernel} conv + {pool}x{pool} pool stages"
                    ))
                };
                let (mut ch, mut hh, mut ww) = (c, h, w);
                for (stage, &out_c) in channels.iter().enumerate() {
                    if hh < kernel || ww < kernel {
                        return Err(too_small());
                    }
                    plan.push(LayerPlan::Conv {
                        in_channels: ch,
                        out_channels: out_c,
                        kernel,
                        in_hw: [hh, ww],
                    });
                    ch = out_c;
                    hh = hh - kernel + 1;
                    ww = ww - kernel + 1;
                    plan.push(LayerPlan::Activation(if stage == 0 { Role::Input } else { Role::Hidden }));
                    if hh < pool || ww < pool {
                        return Err(too_small());
                    }
                    plan.push(LayerPlan::MaxPool {
                        channels: ch,
                        in_hw: [hh, ww],
                        size: pool,
                        stride: pool_stride,
                    });
                    hh = (hh - pool) / pool_stride + 1;
                    ww = (ww - pool) / pool_stride + 1;
                }
                plan.push(LayerPlan::Dropout { p: dropout });
                let flat = ch * hh * ww;
                let fc = fc_width.unwrap_or(flat);
                plan.push(LayerPlan::Linear {
                    inputs: flat,
                    outputs: fc,
                });
                plan.push(LayerPlan::Activation(Role::Output));
                plan.push(LayerPlan::Linear {
                    inputs: fc,
                    outputs: fc2_width,
                });
                plan.push(LayerPlan::Linear {
                    inputs: fc2_width,
                    outputs: self.n_classes,
                });
            }
        }
        Ok(plan)
    }
}

/// One resolved layer. Activations and dropout preserve their input shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerPlan {
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        in_hw: [usize; 2],
    },
    MaxPool {
        channels: usize,
        in_hw: [usize; 2],
        size: usize,
        stride: usize,
    },
    Activation(Role),
    Dropout {
        p: f64,
    },
}

impl LayerPlan {
    /// Per-sample element count produced by this layer, given its input count.
    pub fn output_len(&self, input_len: usize) -> usize {
        match *self {
            LayerPlan::Linear { outputs, .. } => outputs,
            LayerPlan::Conv {
                out_channels,
                kernel,
                in_hw: [h, w],
                ..
            } => out_channels * (h - kernel + 1) * (w - kernel + 1),
            LayerPlan::MaxPool {
                channels,
                in_hw: [h, w],
                size,
                stride,
            } => channels * ((h - size) / stride + 1) * ((w - size) / stride + 1),
            LayerPlan::Activation(_) | LayerPlan::Dropout { .. } => input_len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::ScalarActivation;

    fn relu() -> AfTriple {
        AfTriple::uniform(ScalarActivation::primitive("ReLU").unwrap())
    }

    /// Independent shape tracer: valid conv then floor-mode pooling.
    fn trace(mut s: usize, stages: usize) -> usize {
        for _ in 0..stages {
            s -= 2;
            s = (s - 3) / 2 + 1;
        }
        s
    }

    #[test]
    fn cnn_flatten_width_follows_the_input() {
        for (hw, expected) in [(28, 1024), (16, 64)] {
            assert_eq!(64 * trace(hw, 2) * trace(hw, 2), expected);
            let plan = NetworkSpec::new(Architecture::cnn(), relu(), [1, hw, hw], 10).plan().unwrap();
            let fc = plan
                .iter()
                .find_map(|l| match l {
                    LayerPlan::Linear { inputs, outputs } => Some((*inputs, *outputs)),
                    _ => None,
                })
                .unwrap();
            assert_eq!(fc, (expected, expected));
        }
    }

    #[test]
    fn fcn_layout() {
        let plan = NetworkSpec::new(Architecture::fcn(), relu(), [1, 28, 28], 10).plan().unwrap();
        let linears: Vec<_> = plan
            .iter()
            .filter_map(|l| match l {
                LayerPlan::Linear { inputs, outputs } => Some((*inputs, *outputs)),
                _ => None,
            })
            .collect();
        assert_eq!(linears, vec![(784, 784), (784, 32), (32, 32), (32, 32), (32, 32), (32, 32), (32, 10)]);
        let roles: Vec<_> = plan
            .iter()
            .filter_map(|l| match l {
                LayerPlan::Activation(r) => Some(*r),
                _ => None,
            })
            .collect();
        assert_eq!(roles.len(), 7);
        assert_eq!(roles[0], Role::Input);
        assert!(roles[1..6].iter().all(|r| *r == Role::Hidden));
        assert_eq!(roles[6], Role::Output);
        let usps = NetworkSpec::new(Architecture::fcn(), relu(), [1, 16, 16], 10).plan().unwrap();
        assert_eq!(usps[0], LayerPlan::Linear { inputs: 256, outputs: 256 });
    }

    #[test]
    fn cnn_rejects_tiny_inputs() {
        assert!(NetworkSpec::new(Architecture::cnn(), relu(), [1, 8, 8], 10).plan().is_err());
    }
}
