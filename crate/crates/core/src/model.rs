//! Model variants and their parameter sets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Permutation;
use crate::layers::{encode, EncoderKind, EncoderParams, EncoderVars, GraphContext, Mode};
use crate::nonlocal::{nonlocal_head, NonLocalParams, NonLocalVars};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Mlp,
    Gcn,
    Gat,
    NlMlp,
    NlGcn,
    NlGat,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Mlp,
        Variant::Gcn,
        Variant::Gat,
        Variant::NlMlp,
        Variant::NlGcn,
        Variant::NlGat,
    ];

    pub fn encoder(self) -> EncoderKind {
        match self {
            Variant::Mlp | Variant::NlMlp => EncoderKind::Mlp,
            Variant::Gcn | Variant::NlGcn => EncoderKind::Gcn,
            Variant::Gat | Variant::NlGat => EncoderKind::Gat,
        }
    }

    pub fn is_nonlocal(self) -> bool {
        matches!(self, Variant::NlMlp | Variant::NlGcn | Variant::NlGat)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mlp => "mlp",
            Variant::Gcn => "gcn",
            Variant::Gat => "gat",
            Variant::NlMlp => "nlmlp",
            Variant::NlGcn => "nlgcn",
            Variant::NlGat => "nlgat",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model variant '{s}'")))
    }
}

/// Architecture of one model instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub dropout: f64,
    pub kernel_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub num_classes: usize,
    pub encoder: EncoderParams,
    pub nonlocal: Option<NonLocalParams>,
}

impl ModelParams {
    /// Baselines emit `C` logits straight from the encoder; non-local variants
    /// use `hidden`-wide embeddings and classify `[ẑ ‖ z]`.
    pub fn init(config: ModelConfig, in_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if config.hidden == 0 || in_dim == 0 || num_classes == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nl = config.variant.is_nonlocal();
        let out_dim = if nl { config.hidden } else { num_classes };
        let encoder = EncoderParams::init(
            config.variant.encoder(),
            in_dim,
            config.hidden,
            out_dim,
            config.dropout,
            &mut rng,
        )?;
        let nonlocal = if nl {
            Some(NonLocalParams::init(config.hidden, num_classes, config.kernel_size, &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            config,
            num_classes,
            encoder,
            nonlocal,
        })
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<_> = self.encoder.named().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        if let Some(nl) = &self.nonlocal {
            out.extend(nl.named());
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<_> = self
            .encoder
            .named_mut()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        if let Some(nl) = &mut self.nonlocal {
            out.extend(nl.named_mut());
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            encoder: self.encoder.bind(tape),
            nonlocal: self.nonlocal.as_ref().map(|nl| nl.bind(tape)),
        }
    }

    /// Reassembles tape handles from a flat list in the order of [`Self::named`].
    pub fn vars_from(&self, flat: &[Var]) -> Result<ModelVars> {
        let want = self.named().len();
        if flat.len() != want {
            return Err(Error::Contract(format!("expected {want} parameter handles, got {}", flat.len())));
        }
        let mut it = flat.iter().copied();
        let mut next = || it.next().expect("length checked");
        let encoder = EncoderVars {
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
            attention: self.encoder.attention.as_ref().map(|_| [next(), next(), next(), next()]),
        };
        let nonlocal = self.nonlocal.as_ref().map(|nl| NonLocalVars {
            calibration: next(),
            convs: nl.convs.iter().map(|_| (next(), next())).collect(),
            classifier_w: next(),
            classifier_b: next(),
        });
        Ok(ModelVars { encoder, nonlocal })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let nl = self.config.variant.is_nonlocal();
        if nl != self.nonlocal.is_some() {
            return Err(Error::Params(format!(
                "variant {} {} non-local parameters",
                self.config.variant,
                if nl { "requires" } else { "does not take" }
            )));
        }
        if self.encoder.kind != self.config.variant.encoder() {
            return Err(Error::Params("encoder kind does not match the variant".into()));
        }
        if (self.encoder.kind == EncoderKind::Gat) != self.encoder.attention.is_some() {
            return Err(Error::Params("attention parameters present iff the encoder is GAT".into()));
        }
        let f = self.encoder.out_dim();
        if let Some(p) = &self.nonlocal {
            let k = p.kernel_size;
            let conv_ok = !p.convs.is_empty()
                && p.convs.iter().all(|c| c.kernel.shape() == [k, f, f] && c.bias.shape() == [f]);
            if p.calibration.shape() != [f]
                || !conv_ok
                || p.classifier_w.shape() != [2 * f, self.num_classes]
                || p.classifier_b.shape() != [self.num_classes]
            {
                return Err(Error::Params("non-local parameter shapes disagree".into()));
            }
        } else if f != self.num_classes {
            return Err(Error::Params("encoder output width must equal the class count".into()));
        }
        if let Some((name, _)) = self.named().into_iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::Params(format!("parameter {name} is not finite")));
        }
        Ok(())
    }
}

/// Tape handles of [`ModelParams`], in the order of [`ModelParams::named`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub nonlocal: Option<NonLocalVars>,
}

impl ModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.encoder.all();
        if let Some(nl) = &self.nonlocal {
            out.extend(nl.all());
        }
        out
    }
}

/// Handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub z: Var,
    pub logits: Var,
    pub scores: Option<Var>,
    pub perm: Option<Permutation>,
}

pub fn forward(
    tape: &mut Tape,
    ctx: &GraphContext,
    params: &ModelParams,
    vars: &ModelVars,
    mode: Mode,
) -> Result<Forward> {
    let x = tape.constant(ctx.features.clone());
    let z = encode(tape, ctx, x, &params.encoder, &vars.encoder, mode)?;
    match &vars.nonlocal {
        None => Ok(Forward {
            z,
            logits: z,
            scores: None,
            perm: None,
        }),
        Some(nl) => {
            let out = nonlocal_head(tape, z, nl)?;
            Ok(Forward {
                z,
                logits: out.logits,
                scores: Some(out.scores),
                perm: Some(out.perm),
            })
        }
    }
}

/// Evaluation-mode outputs as plain tensors.
#[derive(Clone, Debug)]
pub struct Inference {
    pub logits: Tensor,
    pub scores: Option<Tensor>,
    pub perm: Option<Permutation>,
}

pub fn infer(ctx: &GraphContext, params: &ModelParams) -> Result<Inference> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let out = forward(&mut tape, ctx, params, &vars, Mode::Eval)?;
    Ok(Inference {
        logits: tape.value(out.logits).clone(),
        scores: out.scores.map(|s| tape.value(s).clone()),
        perm: out.perm,
    })
}

/// Row-wise arg-max, lowest class index on ties.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SyntheticSpec};

    fn cfg(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            hidden: 16,
            dropout: 0.5,
            kernel_size: 3,
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("geomgcn".parse::<Variant>().is_err());
    }

    #[test]
    fn logits_have_class_width_for_every_variant() {
        let g = generate_synthetic(&SyntheticSpec::new(50, 5, 0.3)).unwrap();
        let ctx = GraphContext::new(&g);
        for v in Variant::ALL {
            let p = ModelParams::init(cfg(v), g.feature_dim(), 5, 1).unwrap();
            let out = infer(&ctx, &p).unwrap();
            assert_eq!(out.logits.shape(), &[50, 5], "{v}");
            assert!(out.logits.is_finite());
            assert_eq!(out.perm.is_some(), v.is_nonlocal());
        }
    }

    #[test]
    fn json_round_trip_preserves_params() {
        let p = ModelParams::init(cfg(Variant::NlGat), 7, 3, 9).unwrap();
        let back = ModelParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn mismatched_params_are_rejected() {
        let mut p = ModelParams::init(cfg(Variant::NlMlp), 7, 3, 9).unwrap();
        p.nonlocal = None;
        let text = serde_json::to_string(&p).unwrap();
        assert!(matches!(ModelParams::from_json(&text), Err(Error::Params(_))));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let l = Tensor::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 2.0, 3.0]]).unwrap();
        assert_eq!(predictions(&l), vec![0, 2]);
    }
}
