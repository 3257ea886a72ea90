//! NDVI and channel stacking for the network input layouts.

use serde::{Deserialize, Serialize};

use crate::raster::{Band, MultispectralRaster, Plane};
use crate::{Error, Result};

/// Below this `NIR + R` the NDVI is defined as 0.
const NDVI_MIN_SUM: f32 = 1e-9;

/// Canonical band names looked up by [`build_stack`].
pub mod band_names {
    pub const BLUE: &str = "blue";
    pub const GREEN: &str = "green";
    pub const RED: &str = "red";
    pub const RED_EDGE: &str = "rededge";
    pub const NIR: &str = "nir";
}

/// Name of the NDVI channel inside a stack.
pub const NDVI_CHANNEL: &str = "NDVI";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// RedEdge-M: R, RE, G, B, RGB(3), CIR(3), NDVI, NIR.
    RedEdge12,
    /// Sequoia: R, RE, G, CIR(3), NDVI, NIR.
    Sequoia8,
    Custom,
}

impl Preset {
    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            Preset::RedEdge12 => &[
                "R", "RE", "G", "B", "RGB.r", "RGB.g", "RGB.b", "CIR.nir", "CIR.r", "CIR.g", "NDVI",
                "NIR",
            ],
            Preset::Sequoia8 => &["R", "RE", "G", "CIR.nir", "CIR.r", "CIR.g", "NDVI", "NIR"],
            Preset::Custom => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FalseColor {
    /// Inputs and outputs ordered (R, G, B).
    Rgb,
    /// Inputs and outputs ordered (NIR, R, G).
    Cir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub plane: Plane,
}

/// Ordered, equally sized channel planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    pub preset: Preset,
    channels: Vec<Channel>,
    width: usize,
    height: usize,
}

impl ChannelStack {
    pub fn new(preset: Preset, channels: Vec<Channel>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::InvariantViolation("channel stack is empty".into()));
        };
        let (width, height) = first.plane.dims();
        if let Some(bad) = channels.iter().find(|c| c.plane.dims() != (width, height)) {
            return Err(Error::DimensionMismatch(bad.name.clone()));
        }
        let expected = preset.channel_names();
        if !expected.is_empty() {
            let names: Vec<&str> = channels.iter().map(|c| c.name.as_str()).collect();
            if names != expected {
                return Err(Error::InvariantViolation(format!(
                    "{preset:?} expects channels {expected:?}, got {names:?}"
                )));
            }
        }
        Ok(Self {
            preset,
            channels,
            width,
            height,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn channel(&self, name: &str) -> Option<&Plane> {
        self.channels.iter().find(|c| c.name == name).map(|c| &c.plane)
    }

    pub fn planes(&self) -> impl Iterator<Item = &Plane> {
        self.channels.iter().map(|c| &c.plane)
    }

    pub fn into_channels(self) -> Vec<Channel> {
        self.channels
    }
}

fn same_dims(bands: &[&Band]) -> Result<()> {
    let dims = bands[0].plane.dims();
    match bands.iter().find(|b| b.plane.dims() != dims) {
        Some(b) => Err(Error::DimensionMismatch(b.name.clone())),
        None => Ok(()),
    }
}

/// `(NIR - R) / (NIR + R)`, zero where the denominator vanishes.
pub fn compute_ndvi(nir: &Band, red: &Band) -> Result<Band> {
    same_dims(&[nir, red])?;
    let data = nir
        .plane
        .data()
        .iter()
        .zip(red.plane.data())
        .map(|(&n, &r)| ndvi_value(n, r))
        .collect();
    Band::derived("ndvi", Plane::from_vec(nir.width(), nir.height(), data)?)
}

#[inline]
pub fn ndvi_value(nir: f32, red: f32) -> f32 {
    let sum = nir + red;
    if sum.abs() < NDVI_MIN_SUM {
        0.0
    } else {
        ((nir - red) / sum).clamp(-1.0, 1.0)
    }
}

/// Stacks three bands as a false-color composite. The inputs are given in
/// the composite's canonical order, see [`FalseColor`].
pub fn compose_false_color(bands: [&Band; 3], _kind: FalseColor) -> Result<[Plane; 3]> {
    same_dims(&bands)?;
    Ok(bands.map(|b| b.plane.clone()))
}

fn require<'a>(raster: &'a MultispectralRaster, name: &str) -> Result<&'a Band> {
    raster
        .band(name)
        .ok_or_else(|| Error::MissingBand(name.to_string()))
}

/// Assembles the channel stack for a preset. Single-band channels are
/// copies of the source planes.
pub fn build_stack(raster: &MultispectralRaster, preset: Preset) -> Result<ChannelStack> {
    use band_names::*;
    let required: &[&str] = match preset {
        Preset::RedEdge12 => &[BLUE, GREEN, RED, RED_EDGE, NIR],
        Preset::Sequoia8 => &[GREEN, RED, RED_EDGE, NIR],
        Preset::Custom => {
            let channels = raster
                .bands()
                .iter()
                .map(|b| Channel {
                    name: b.name.clone(),
                    plane: b.plane.clone(),
                })
                .collect();
            return ChannelStack::new(Preset::Custom, channels);
        }
    };
    for name in required {
        require(raster, name)?;
    }
    let red = require(raster, RED)?;
    let green = require(raster, GREEN)?;
    let red_edge = require(raster, RED_EDGE)?;
    let nir = require(raster, NIR)?;
    let ndvi = compute_ndvi(nir, red)?;
    let cir = compose_false_color([nir, red, green], FalseColor::Cir)?;

    let mut planes: Vec<Plane> = vec![red.plane.clone(), red_edge.plane.clone(), green.plane.clone()];
    if preset == Preset::RedEdge12 {
        let blue = require(raster, BLUE)?;
        planes.push(blue.plane.clone());
        planes.extend(compose_false_color([red, green, blue], FalseColor::Rgb)?);
    }
    planes.extend(cir);
    planes.push(ndvi.plane);
    planes.push(nir.plane.clone());

    let channels = preset
        .channel_names()
        .iter()
        .zip(planes)
        .map(|(name, plane)| Channel {
            name: name.to_string(),
            plane,
        })
        .collect();
    ChannelStack::new(preset, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn constant(name: &str, w: usize, h: usize, v: f32) -> Band {
        Band::new(name, 0.0, 0.0, Plane::filled(w, h, v)).unwrap()
    }

    fn random_band(name: &str, w: usize, h: usize, rng: &mut impl Rng) -> Band {
        Band::new(name, 0.0, 0.0, Plane::from_fn(w, h, |_, _| rng.random())).unwrap()
    }

    fn raster(names: &[&str], seed: u64) -> MultispectralRaster {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bands = names.iter().map(|n| random_band(n, 7, 5, &mut rng)).collect();
        MultispectralRaster::new(bands, 1.0, "t").unwrap()
    }

    #[test]
    fn equal_nir_and_red_give_zero() {
        let n = constant("nir", 3, 3, 0.4);
        let r = constant("red", 3, 3, 0.4);
        assert!(compute_ndvi(&n, &r).unwrap().plane.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ndvi_arithmetic() {
        let n = constant("nir", 1, 1, 0.8);
        let r = constant("red", 1, 1, 0.2);
        let v = compute_ndvi(&n, &r).unwrap().plane.data()[0];
        assert!((v - 0.6).abs() < 1e-6);
    }

    #[test]
    fn black_pixels_give_zero_ndvi() {
        let n = constant("nir", 2, 2, 0.0);
        let r = constant("red", 2, 2, 0.0);
        assert!(compute_ndvi(&n, &r).unwrap().plane.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ndvi_dimension_mismatch() {
        let n = constant("nir", 2, 2, 0.5);
        let r = constant("red", 3, 2, 0.5);
        assert!(matches!(compute_ndvi(&n, &r), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rgb_of_constant_planes() {
        let planes = compose_false_color(
            [&constant("r", 2, 2, 1.0), &constant("g", 2, 2, 0.0), &constant("b", 2, 2, 0.0)],
            FalseColor::Rgb,
        )
        .unwrap();
        assert!(planes[0].data().iter().all(|&v| v == 1.0));
        assert!(planes[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cir_preserves_inputs_bit_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let nir = random_band("nir", 6, 4, &mut rng);
        let red = random_band("red", 6, 4, &mut rng);
        let green = random_band("green", 6, 4, &mut rng);
        let [a, b, c] = compose_false_color([&nir, &red, &green], FalseColor::Cir).unwrap();
        assert_eq!(a, nir.plane);
        assert_eq!(b, red.plane);
        assert_eq!(c, green.plane);
    }

    #[test]
    fn rededge_stack_has_twelve_planes() {
        let r = raster(&["blue", "green", "red", "rededge", "nir"], 1);
        let s = build_stack(&r, Preset::RedEdge12).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s.names(), Preset::RedEdge12.channel_names());
        let band = |n: &str| &r.band(n).unwrap().plane;
        assert_eq!(s.channel("R").unwrap(), band("red"));
        assert_eq!(s.channel("RE").unwrap(), band("rededge"));
        assert_eq!(s.channel("B").unwrap(), band("blue"));
        assert_eq!(s.channel("RGB.b").unwrap(), band("blue"));
        assert_eq!(s.channel("CIR.nir").unwrap(), band("nir"));
        assert_eq!(s.channel("CIR.g").unwrap(), band("green"));
        assert_eq!(s.channel("NIR").unwrap(), band("nir"));
    }

    #[test]
    fn sequoia_stack_has_eight_planes() {
        let r = raster(&["green", "red", "rededge", "nir"], 2);
        let s = build_stack(&r, Preset::Sequoia8).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.names(), Preset::Sequoia8.channel_names());
    }

    #[test]
    fn sequoia_without_nir() {
        let r = raster(&["green", "red", "rededge"], 2);
        match build_stack(&r, Preset::Sequoia8) {
            Err(Error::MissingBand(name)) => assert_eq!(name, "nir"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn build_stack_is_deterministic() {
        let r = raster(&["blue", "green", "red", "rededge", "nir"], 9);
        assert_eq!(
            build_stack(&r, Preset::RedEdge12).unwrap(),
            build_stack(&r, Preset::RedEdge12).unwrap()
        );
    }

    proptest! {
        #[test]
        fn ndvi_bounded_and_antisymmetric(seed in any::<u64>(), w in 1usize..16, h in 1usize..16) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let nir = random_band("nir", w, h, &mut rng);
            let red = random_band("red", w, h, &mut rng);
            let a = compute_ndvi(&nir, &red).unwrap();
            let b = compute_ndvi(&red, &nir).unwrap();
            for i in 0..w * h {
                let (n, r) = (nir.plane.data()[i] as f64, red.plane.data()[i] as f64);
                let oracle = if n + r < 1e-9 { 0.0 } else { (n - r) / (n + r) };
                let v = a.plane.data()[i];
                prop_assert!((-1.0..=1.0).contains(&v));
                prop_assert!((v as f64 - oracle).abs() < 1e-6);
                prop_assert_eq!(b.plane.data()[i], -v);
            }
        }

        #[test]
        fn stack_then_split_is_identity(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bands: Vec<Band> = ["r", "g", "b"].iter().map(|n| random_band(n, 5, 3, &mut rng)).collect();
            let planes = compose_false_color([&bands[0], &bands[1], &bands[2]], FalseColor::Rgb).unwrap();
            for (p, b) in planes.iter().zip(&bands) {
                prop_assert_eq!(p, &b.plane);
            }
        }
    }
}
