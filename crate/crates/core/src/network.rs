//! Multilayer perceptron parameters: initialization, plain evaluation, input
//! normalization, and checkpoint persistence.
//!
//! The networks are small dense MLPs with `tanh` hidden activations and a
//! linear output layer. Inputs are normalized per coordinate with statistics
//! taken from the residual training set; the stored `(mu, sigma)` pairs are
//! part of the parameter state so a checkpoint fully determines the function.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Per-coordinate input normalization `z = (x - mu) / sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// One dense layer: weight matrix `(fan_out, fan_in)` and bias vector.
#[derive(Clone, Debug)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Full parameter state of one MLP.
#[derive(Clone, Debug)]
pub struct MlpParams {
    /// Layer widths, input first, e.g. `[2, 50, 50, 50, 50, 1]`.
    pub sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    pub norm: Normalization,
    /// Seed used for initialization (kept for provenance).
    pub seed: u64,
}

/// Draws Glorot-uniform weights `U(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`
/// and zero biases, using a counter-based deterministic generator.
///
/// Weights are drawn layer by layer in row-major order, so a given
/// `(sizes, seed)` pair always produces the same parameters.
pub fn init_glorot(sizes: &[usize], seed: u64) -> Result<MlpParams> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArg(format!(
            "network needs at least input and output widths, got {sizes:?}"
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArg(format!("zero layer width in {sizes:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for l in 0..sizes.len() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Array2::zeros((fan_out, fan_in));
        for r in 0..fan_out {
            for c in 0..fan_in {
                w[[r, c]] = s * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        layers.push(Layer {
            w,
            b: Array1::zeros(fan_out),
        });
    }
    Ok(MlpParams {
        sizes: sizes.to_vec(),
        layers,
        norm: Normalization {
            mu: vec![0.0; sizes[0]],
            sigma: vec![1.0; sizes[0]],
        },
        seed,
    })
}

impl MlpParams {
    /// Input dimension.
    pub fn dim_in(&self) -> usize {
        self.sizes[0]
    }

    /// Total number of trainable scalars.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Sets `(mu, sigma)` from a point set (rows = points, columns = input
    /// coordinates), using the population standard deviation.
    ///
    /// Errors if a coordinate is degenerate (zero spread).
    pub fn set_normalization(&mut self, points: &Array2<f64>) -> Result<()> {
        let dim = self.dim_in();
        if points.ncols() != dim {
            return Err(Error::InvalidArg(format!(
                "normalization points have {} columns, network expects {dim}",
                points.ncols()
            )));
        }
        if points.nrows() == 0 {
            return Err(Error::InvalidArg("empty normalization point set".into()));
        }
        let n = points.nrows() as f64;
        let mut mu = vec![0.0; dim];
        let mut sigma = vec![0.0; dim];
        for d in 0..dim {
            let col = points.column(d);
            let m = col.sum() / n;
            let var = col.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n;
            if var <= 0.0 {
                return Err(Error::InvalidArg(format!(
                    "input coordinate {d} has zero spread; cannot normalize"
                )));
            }
            mu[d] = m;
            sigma[d] = var.sqrt();
        }
        self.norm = Normalization { mu, sigma };
        Ok(())
    }

    /// Plain scalar evaluation: normalized input, `tanh` hidden layers,
    /// identity output. Panics if `x.len()` differs from the input dimension.
    pub fn forward(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim_in(), "input dimension mismatch");
        let mut z: Vec<f64> = x
            .iter()
            .zip(self.norm.mu.iter().zip(&self.norm.sigma))
            .map(|(&xi, (&m, &s))| (xi - m) / s)
            .collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.b.to_vec();
            for (r, o) in out.iter_mut().enumerate() {
                let row = layer.w.row(r);
                for (c, &zc) in z.iter().enumerate() {
                    *o += row[c] * zc;
                }
            }
            if l != last {
                for o in &mut out {
                    *o = o.tanh();
                }
            }
            z = out;
        }
        debug_assert_eq!(z.len(), 1, "scalar-output network expected");
        z[0]
    }

    /// Copies all trainable parameters into one flat vector
    /// (per layer: row-major weights, then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    /// Writes a flat vector (same layout as [`flatten`](Self::flatten)) back
    /// into the layer arrays.
    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length mismatch");
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = flat[i];
                i += 1;
            }
            for b in l.b.iter_mut() {
                *b = flat[i];
                i += 1;
            }
        }
    }

    /// Saves a checkpoint; see [`load_checkpoint`] for the format.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            sizes: self.sizes.clone(),
            weights: self.layers.iter().map(|l| l.w.iter().copied().collect()).collect(),
            biases: self.layers.iter().map(|l| l.b.to_vec()).collect(),
            mu: self.norm.mu.clone(),
            sigma: self.norm.sigma.clone(),
            seed: self.seed,
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Parse(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

const FORMAT_TAG: &str = "mlp-checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    seed: u64,
}

/// Loads a checkpoint written by [`MlpParams::save_checkpoint`].
///
/// The format is versioned JSON with per-layer row-major weight lists; floats
/// round-trip bit-exactly. Dimension mismatches and unknown versions are
/// rejected with a parse error.
pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
    if file.format != FORMAT_TAG {
        return Err(Error::Parse(format!("unknown checkpoint format {:?}", file.format)));
    }
    if file.version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    let sizes = file.sizes;
    if sizes.len() < 2 {
        return Err(Error::Parse("checkpoint has fewer than two layer sizes".into()));
    }
    let n_layers = sizes.len() - 1;
    if file.weights.len() != n_layers || file.biases.len() != n_layers {
        return Err(Error::Parse("checkpoint layer count mismatch".into()));
    }
    if file.mu.len() != sizes[0] || file.sigma.len() != sizes[0] {
        return Err(Error::Parse("checkpoint normalization length mismatch".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        if file.weights[l].len() != fan_in * fan_out || file.biases[l].len() != fan_out {
            return Err(Error::Parse(format!("checkpoint layer {l} dimension mismatch")));
        }
        let w = Array2::from_shape_vec((fan_out, fan_in), file.weights[l].clone())
            .map_err(|e| Error::Parse(format!("checkpoint layer {l}: {e}")))?;
        layers.push(Layer {
            w,
            b: Array1::from_vec(file.biases[l].clone()),
        });
    }
    Ok(MlpParams {
        sizes,
        layers,
        norm: Normalization {
            mu: file.mu,
            sigma: file.sigma,
        },
        seed: file.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let p = init_glorot(&[2, 50, 50, 1], 42).unwrap();
        for (l, layer) in p.layers.iter().enumerate() {
            let s = (6.0 / (p.sizes[l] + p.sizes[l + 1]) as f64).sqrt();
            let max = layer.w.iter().fold(0.0_f64, |m, &w| m.max(w.abs()));
            assert!(max <= s, "layer {l}: |w| max {max} exceeds bound {s}");
            assert!(max > 0.5 * s, "layer {l}: weights suspiciously small");
            assert!(layer.b.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn initialization_is_deterministic_in_the_seed() {
        let a = init_glorot(&[2, 30, 1], 7).unwrap();
        let b = init_glorot(&[2, 30, 1], 7).unwrap();
        let c = init_glorot(&[2, 30, 1], 8).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn forward_matches_hand_computed_two_neuron_net() {
        let mut p = init_glorot(&[1, 2, 1], 0).unwrap();
        p.layers[0].w = array![[0.5], [-1.2]];
        p.layers[0].b = array![0.1, 0.4];
        p.layers[1].w = array![[2.0, -0.7]];
        p.layers[1].b = array![0.05];
        let x = 0.8;
        let expect = 2.0 * (0.5 * x + 0.1_f64).tanh() - 0.7 * (-1.2 * x + 0.4_f64).tanh() + 0.05;
        assert!((p.forward(&[x]) - expect).abs() < 1e-15);
    }

    #[test]
    fn normalization_statistics_are_unit_on_the_training_set() {
        let mut rng_x = 0.123_f64;
        let mut pts = Array2::zeros((500, 2));
        for i in 0..500 {
            // cheap deterministic scatter
            rng_x = (rng_x * 997.13 + 0.71).fract();
            pts[[i, 0]] = 3.0 * rng_x + 1.0;
            pts[[i, 1]] = 10.0 * rng_x.powi(2) - 4.0;
        }
        let mut p = init_glorot(&[2, 5, 1], 1).unwrap();
        p.set_normalization(&pts).unwrap();
        for d in 0..2 {
            let (mut mean, mut var) = (0.0, 0.0);
            for i in 0..500 {
                let z = (pts[[i, d]] - p.norm.mu[d]) / p.norm.sigma[d];
                mean += z;
                var += z * z;
            }
            mean /= 500.0;
            var /= 500.0;
            assert!(mean.abs() < 1e-10, "dim {d}: mean {mean}");
            assert!((var - 1.0).abs() < 1e-10, "dim {d}: var {var}");
        }
    }

    #[test]
    fn degenerate_coordinate_is_rejected() {
        let pts = Array2::from_shape_fn((10, 2), |(i, d)| if d == 0 { i as f64 } else { 2.5 });
        let mut p = init_glorot(&[2, 5, 1], 1).unwrap();
        assert!(p.set_normalization(&pts).is_err());
    }

    #[test]
    fn flatten_round_trips() {
        let p = init_glorot(&[2, 10, 10, 1], 5).unwrap();
        let flat = p.flatten();
        assert_eq!(flat.len(), p.n_params());
        let mut q = init_glorot(&[2, 10, 10, 1], 99).unwrap();
        q.assign_from_flat(&flat);
        assert_eq!(q.flatten(), flat);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact_and_stable() {
        let dir = std::env::temp_dir().join("pdeopt-net-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.json");
        let mut p = init_glorot(&[2, 8, 8, 1], 11).unwrap();
        let pts = Array2::from_shape_fn((50, 2), |(i, d)| (i as f64 * 0.917 + d as f64).sin());
        p.set_normalization(&pts).unwrap();
        p.save_checkpoint(&path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(p.flatten(), q.flatten());
        assert_eq!(p.sizes, q.sizes);
        assert_eq!(p.norm, q.norm);
        assert_eq!(p.seed, q.seed);
        // re-saving the loaded state reproduces the file byte for byte
        let path2 = dir.join("ckpt2.json");
        q.save_checkpoint(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let dir = std::env::temp_dir().join("pdeopt-net-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, "{\"format\": \"mlp-checkpoint\", \"version\": 1").unwrap();
        assert!(load_checkpoint(&path).is_err());
        // wrong dimensions
        let p = init_glorot(&[1, 3, 1], 0).unwrap();
        p.save_checkpoint(&path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"sizes\": [\n    1,", "\"sizes\": [\n    2,");
        std::fs::write(&path, text).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
