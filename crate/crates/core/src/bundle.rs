//! Trained model container and its on-disk format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "NAVIGANM"
//! version  u32      currently 1
//! hlen     u32      length of the JSON header in bytes
//! header   hlen     JSON: variant, frame config, dims, parameter names and shapes
//! payload           f64 values of every listed parameter, in header order
//! ```
//!
//! Loading rebuilds the architecture from the header and then fills it,
//! so a header whose shapes disagree with its dims is rejected.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::discriminator::DiscriminatorParams;
use crate::error::{Error, Result};
use crate::generators::{Generator, GeneratorParams, GoalSocialParams, ModelDims};
use crate::geometry::Point;
use crate::nn::ParamStore;
use crate::scene::{FrameConfig, SceneContext};
use crate::tape::Matrix;

pub const BUNDLE_MAGIC: &[u8; 8] = b"NAVIGANM";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    GoalSocial,
    NaviL2,
    Navigan,
    NaviganR,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::GoalSocial,
        Variant::NaviL2,
        Variant::Navigan,
        Variant::NaviganR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::GoalSocial => "GOAL_SOCIAL",
            Variant::NaviL2 => "NAVI_L2",
            Variant::Navigan => "NAVIGAN",
            Variant::NaviganR => "NAVIGAN_R",
        }
    }

    /// Intention and social branches (everything except the baseline).
    pub fn has_forces(self) -> bool {
        self != Variant::GoalSocial
    }

    pub fn adversarial(self) -> bool {
        matches!(self, Variant::Navigan | Variant::NaviganR)
    }

    /// NaviL2 runs the social branch without fluctuation noise.
    pub fn uses_noise(self) -> bool {
        self.adversarial()
    }

    pub fn uses_resistance(self) -> bool {
        self == Variant::NaviganR
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub variant: Variant,
    pub frame: FrameConfig,
    pub generator: Generator,
    /// Present for the adversarial variants.
    pub discriminator: Option<DiscriminatorParams>,
}

impl ModelBundle {
    /// Freshly initialized parameters drawn from `seed`.
    pub fn new(variant: Variant, frame: FrameConfig, dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = if variant.has_forces() {
            Generator::Forces(GeneratorParams::new(dims, &mut rng))
        } else {
            Generator::GoalSocial(GoalSocialParams::new(dims, &mut rng))
        };
        let discriminator = variant
            .adversarial()
            .then(|| DiscriminatorParams::new(dims, &mut rng));
        ModelBundle {
            variant,
            frame,
            generator,
            discriminator,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.generator.dims()
    }

    /// Draws the fluctuation noise for one query: standard normal for the
    /// adversarial variants, zeros otherwise.
    pub fn draw_noise(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let n = self.dims().noise_dim;
        if self.variant.uses_noise() {
            (0..n).map(|_| StandardNormal.sample(rng)).collect()
        } else {
            vec![0.0; n]
        }
    }

    /// Target-centric waypoints for one planning query.
    pub fn plan<C: SceneContext>(
        &self,
        ctx: &C,
        rng: &mut impl rand::Rng,
        intention_only: bool,
    ) -> Result<Vec<Point>> {
        let t_obs = ctx.target_observed().len();
        if t_obs != self.frame.t_obs {
            return Err(Error::ModelDimensionMismatch(format!(
                "model observes {} steps, query has {t_obs}",
                self.frame.t_obs
            )));
        }
        let noise = self.draw_noise(rng);
        self.generator
            .plan(ctx, &noise, self.frame.t_pred, intention_only)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let stores = self.stores();
        let header = Header {
            variant: self.variant,
            frame: self.frame,
            dims: self.dims(),
            generator: shapes(stores[0]),
            discriminator: stores.get(1).map(|s| shapes(s)),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for store in stores {
            for (_, _, m) in store.iter() {
                for v in &m.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("model bundle: {m}"));
        if bytes.len() < 16 || &bytes[..8] != BUNDLE_MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        let mut payload = &body[hlen..];
        let mut read = |list: &[ParamShape]| -> Result<Vec<(String, Matrix)>> {
            list.iter()
                .map(|p| {
                    let n = p.rows * p.cols;
                    if payload.len() < 8 * n {
                        return Err(bad("truncated payload"));
                    }
                    let data = payload[..8 * n]
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    payload = &payload[8 * n..];
                    Ok((p.name.clone(), Matrix::from_vec(p.rows, p.cols, data)))
                })
                .collect()
        };
        let gen = read(&header.generator)?;
        let disc = header.discriminator.as_deref().map(&mut read).transpose()?;
        if !payload.is_empty() {
            return Err(bad("trailing bytes"));
        }
        header.frame.validate()?;
        let mut bundle = ModelBundle::new(header.variant, header.frame, header.dims, 0);
        bundle
            .generator
            .store_mut()
            .load_from(&gen)
            .map_err(Error::ModelDimensionMismatch)?;
        match (&mut bundle.discriminator, disc) {
            (Some(d), Some(values)) => d
                .store
                .load_from(&values)
                .map_err(Error::ModelDimensionMismatch)?,
            (None, None) => {}
            _ => {
                return Err(Error::ModelDimensionMismatch(format!(
                    "discriminator presence does not match variant {}",
                    header.variant
                )))
            }
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn stores(&self) -> Vec<&ParamStore> {
        let mut v = vec![self.generator.store()];
        if let Some(d) = &self.discriminator {
            v.push(&d.store);
        }
        v
    }
}

#[derive(Serialize, Deserialize)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    variant: Variant,
    frame: FrameConfig,
    dims: ModelDims,
    generator: Vec<ParamShape>,
    discriminator: Option<Vec<ParamShape>>,
}

fn shapes(store: &ParamStore) -> Vec<ParamShape> {
    store
        .iter()
        .map(|(_, name, m)| ParamShape {
            name: name.to_string(),
            rows: m.rows,
            cols: m.cols,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        for v in Variant::ALL {
            let b = ModelBundle::new(v, FrameConfig::default(), ModelDims::default(), 42);
            let bytes = b.to_bytes();
            let back = ModelBundle::from_bytes(&bytes).unwrap();
            assert_eq!(back, b, "{v}");
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let b = ModelBundle::new(Variant::NaviL2, FrameConfig::default(), ModelDims::default(), 1);
        let mut bytes = b.to_bytes();
        // shrink the declared hidden size without touching the shapes
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[16..16 + hlen].to_vec()).unwrap();
        let patched = header.replacen("\"hidden\":32", "\"hidden\":31", 1);
        assert_eq!(patched.len(), header.len());
        bytes[16..16 + hlen].copy_from_slice(patched.as_bytes());
        assert!(matches!(
            ModelBundle::from_bytes(&bytes),
            Err(Error::ModelDimensionMismatch(_))
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let b = ModelBundle::new(Variant::Navigan, FrameConfig::default(), ModelDims::default(), 1);
        let bytes = b.to_bytes();
        assert!(ModelBundle::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(ModelBundle::from_bytes(b"NOTAMODELFILE...").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelBundle::from_bytes(&extra).is_err());
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("navigan-r".parse::<Variant>().unwrap(), Variant::NaviganR);
        assert!("navigan-x".parse::<Variant>().is_err());
        assert_eq!(serde_json::to_string(&Variant::NaviL2).unwrap(), "\"NAVI_L2\"");
    }
}
