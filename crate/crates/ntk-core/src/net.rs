//! Finite-width ReLU networks.
//!
//! A depth-L architecture is a width vector `n_0 … n_L` (input width `n_0 = d`,
//! scalar output `n_L = 1`) plus one weight variance per layer. Layer l maps
//! `f_{l-1} ↦ g_l = W_lᵀ f_{l-1}` with `W_l ∈ R^{n_{l-1} x n_l}`, entries
//! i.i.d. `N(0, β_l²)`; hidden layers apply the ReLU, the output layer is
//! linear. The derivative convention at the kink is `σ'(0) = 0`.
//!
//! [`forward`] records everything later modules need — pre- and
//! post-activations, the 0/1 activation diagonals and the sign pattern per
//! hidden layer — so Jacobians and Lipschitz probes never re-run the network.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::data::{sample, DataSpec};
use crate::error::{Error, Result};
use crate::rng;

/// Widths `n_0 … n_L` and per-layer weight variances `β_1² … β_L²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    widths: Vec<usize>,
    variances: Vec<f64>,
}

/// He initialisation variances `β_l² = 2 / n_{l-1}` — the scaling that keeps
/// ReLU signal norms flat across depth.
pub fn he_variances(widths: &[usize]) -> Vec<f64> {
    widths.windows(2).map(|w| 2.0 / w[0] as f64).collect()
}

/// LeCun initialisation variances `β_l² = 1 / n_{l-1}`.
pub fn lecun_variances(widths: &[usize]) -> Vec<f64> {
    widths.windows(2).map(|w| 1.0 / w[0] as f64).collect()
}

impl Architecture {
    pub fn new(widths: Vec<usize>, variances: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("need at least an input and an output layer"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("all widths must be at least 1"));
        }
        if *widths.last().expect("non-empty") != 1 {
            return Err(Error::invalid("output width must be 1"));
        }
        if variances.len() != widths.len() - 1 {
            return Err(Error::shape(format!(
                "expected {} layer variances, got {}",
                widths.len() - 1,
                variances.len()
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("all variances must be positive and finite"));
        }
        Ok(Architecture { widths, variances })
    }

    /// He-initialised architecture for the given widths.
    pub fn he(widths: Vec<usize>) -> Result<Self> {
        let variances = he_variances(&widths);
        Architecture::new(widths, variances)
    }

    /// LeCun-initialised architecture for the given widths.
    pub fn lecun(widths: Vec<usize>) -> Result<Self> {
        let variances = lecun_variances(&widths);
        Architecture::new(widths, variances)
    }

    /// Number of weight layers L.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// Input dimension `n_0`.
    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Width `n_l`, `0 <= l <= L`.
    pub fn width(&self, l: usize) -> usize {
        self.widths[l]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Variance `β_l²`, 1-based layer index.
    pub fn variance(&self, l: usize) -> f64 {
        self.variances[l - 1]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

/// A concrete draw of all layer weights for an architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    arch: Architecture,
    /// `matrices[l-1]` is `W_l`, shape `n_{l-1} x n_l`.
    matrices: Vec<DMatrix<f64>>,
}

impl WeightSet {
    /// Wrap explicit matrices (shape `n_{l-1} x n_l` each) as a weight set.
    pub fn from_matrices(arch: Architecture, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.len() != arch.depth() {
            return Err(Error::shape(format!(
                "expected {} layer matrices, got {}",
                arch.depth(),
                matrices.len()
            )));
        }
        for (idx, m) in matrices.iter().enumerate() {
            let l = idx + 1;
            if m.shape() != (arch.width(l - 1), arch.width(l)) {
                return Err(Error::shape(format!(
                    "layer {l} has shape {:?}, expected ({}, {})",
                    m.shape(),
                    arch.width(l - 1),
                    arch.width(l)
                )));
            }
        }
        Ok(WeightSet { arch, matrices })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// `W_l`, 1-based layer index.
    pub fn layer(&self, l: usize) -> &DMatrix<f64> {
        &self.matrices[l - 1]
    }

    /// Mutable `W_l`, 1-based — for perturbation studies; shapes must stay
    /// fixed.
    pub fn layer_mut(&mut self, l: usize) -> &mut DMatrix<f64> {
        &mut self.matrices[l - 1]
    }

    pub fn depth(&self) -> usize {
        self.matrices.len()
    }

    /// Total number of scalar weights `Σ n_{l-1} n_l`.
    pub fn n_params(&self) -> usize {
        self.matrices.iter().map(|m| m.len()).sum()
    }
}

/// Draw weights `W_l ~ N(0, β_l²)` entrywise. Layer l uses its own child
/// stream of `seed`, filled in column-major order, so a layer's draw depends
/// only on `(seed, l)` and the layer shapes.
pub fn init_weights(arch: &Architecture, seed: u64) -> WeightSet {
    let mut matrices = Vec::with_capacity(arch.depth());
    for l in 1..=arch.depth() {
        let (rows, cols) = (arch.width(l - 1), arch.width(l));
        let sd = arch.variance(l).sqrt();
        let mut stream = rng::substream(seed, "weights-layer", l as u64);
        let mut w = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                let g: f64 = rand::Rng::sample(&mut stream, StandardNormal);
                w[(i, j)] = sd * g;
            }
        }
        matrices.push(w);
    }
    WeightSet { arch: arch.clone(), matrices }
}

/// Everything one forward pass produces.
///
/// `pre[l-1]` is `g_l` for `l = 1..=L`; `post[l]` is `f_l` for `l = 0..=L`
/// (`post[0]` the input, `post[L]` the scalar output); `diag[l-1]` and
/// `signs[l-1]` describe hidden layer l: the 0/1 ReLU-derivative diagonal
/// and the sign of each pre-activation in {-1, 0, +1} (0 exactly on the
/// kink, where the derivative convention puts the diagonal to 0 too).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pre: Vec<DVector<f64>>,
    pub post: Vec<DVector<f64>>,
    pub diag: Vec<DVector<f64>>,
    pub signs: Vec<Vec<i8>>,
}

impl ForwardTrace {
    /// Network output `f_L(x)`.
    pub fn output(&self) -> f64 {
        self.post.last().expect("output layer present")[0]
    }

    /// `f_l`, `0 <= l <= L`.
    pub fn feature(&self, l: usize) -> &DVector<f64> {
        &self.post[l]
    }

    /// `g_l`, 1-based.
    pub fn pre_activation(&self, l: usize) -> &DVector<f64> {
        &self.pre[l - 1]
    }

    /// ReLU-derivative diagonal of hidden layer l (1-based, `l <= L-1`).
    pub fn activation_diag(&self, l: usize) -> &DVector<f64> {
        &self.diag[l - 1]
    }
}

/// Run the network on one input.
pub fn forward(weights: &WeightSet, x: &DVector<f64>) -> Result<ForwardTrace> {
    let arch = weights.architecture();
    if x.len() != arch.input_dim() {
        return Err(Error::shape(format!(
            "input length {} does not match input width {}",
            x.len(),
            arch.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("input has non-finite entries"));
    }
    let depth = arch.depth();
    let mut pre = Vec::with_capacity(depth);
    let mut post = Vec::with_capacity(depth + 1);
    let mut diag = Vec::with_capacity(depth.saturating_sub(1));
    let mut signs = Vec::with_capacity(depth.saturating_sub(1));
    post.push(x.clone());
    for l in 1..=depth {
        let g = weights.layer(l).transpose() * post.last().expect("previous feature");
        if l < depth {
            let f = g.map(|v| v.max(0.0));
            diag.push(g.map(|v| f64::from(v > 0.0)));
            signs.push(g.iter().map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 }).collect());
            pre.push(g);
            post.push(f);
        } else {
            post.push(g.clone());
            pre.push(g);
        }
    }
    Ok(ForwardTrace { pre, post, diag, signs })
}

/// Per-layer feature matrices of a batch: `layer(l)` stacks `f_l(x_i)ᵀ` as
/// rows, for `l = 0..=L-1`; `layer(0)` is the input matrix itself.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrices {
    layers: Vec<DMatrix<f64>>,
}

impl FeatureMatrices {
    pub fn layer(&self, l: usize) -> &DMatrix<f64> {
        &self.layers[l]
    }

    /// Number of stored layers (`L`, covering `0..=L-1`).
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Forward the whole batch; returns the feature matrices `F_0 … F_{L-1}`
/// and the per-sample traces (row i of `layer(l)` equals `f_l(x_i)`).
pub fn batch_forward(weights: &WeightSet, x: &DMatrix<f64>) -> Result<(FeatureMatrices, Vec<ForwardTrace>)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::shape("batch must contain at least one sample"));
    }
    let depth = weights.depth();
    let mut traces = Vec::with_capacity(n);
    for i in 0..n {
        traces.push(forward(weights, &x.row(i).transpose())?);
    }
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let width = weights.architecture().width(l);
        let mut f = DMatrix::zeros(n, width);
        for (i, trace) in traces.iter().enumerate() {
            f.row_mut(i).copy_from(&trace.feature(l).transpose());
        }
        layers.push(f);
    }
    Ok((FeatureMatrices { layers }, traces))
}

/// Subtract a Monte Carlo estimate of `E[f_layer(x)]` (over `mc_samples`
/// fresh draws from `spec`'s distribution, seeded by `seed`) from every row
/// of `features`. Returns the centred matrix and the mean estimate.
pub fn center_features(
    weights: &WeightSet,
    layer: usize,
    features: &DMatrix<f64>,
    spec: &DataSpec,
    mc_samples: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let arch = weights.architecture();
    if layer >= arch.depth() {
        return Err(Error::invalid(format!(
            "feature layer {layer} out of range (have 0..={})",
            arch.depth() - 1
        )));
    }
    if features.ncols() != arch.width(layer) {
        return Err(Error::shape(format!(
            "features have {} columns, layer {layer} has width {}",
            features.ncols(),
            arch.width(layer)
        )));
    }
    if spec.dimension != arch.input_dim() {
        return Err(Error::shape("data spec dimension does not match the architecture"));
    }
    if mc_samples == 0 {
        return Err(Error::invalid("mc_samples must be at least 1"));
    }

    let fresh = sample(&DataSpec { n_samples: mc_samples, seed, ..*spec })?;
    let mut mean = DVector::zeros(arch.width(layer));
    for i in 0..mc_samples {
        let x = fresh.row(i).transpose();
        if layer == 0 {
            mean += x;
        } else {
            mean += forward(weights, &x)?.feature(layer);
        }
    }
    mean /= mc_samples as f64;

    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok((centered, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Distribution;
    use approx::assert_relative_eq;

    fn scalar_chain(w1: f64, w2: f64) -> WeightSet {
        let arch = Architecture::new(vec![1, 1, 1], vec![1.0, 1.0]).unwrap();
        let mut ws = init_weights(&arch, 0);
        ws.matrices[0][(0, 0)] = w1;
        ws.matrices[1][(0, 0)] = w2;
        ws
    }

    #[test]
    fn architecture_validation() {
        assert!(Architecture::new(vec![4], vec![]).is_err());
        assert!(Architecture::new(vec![4, 8, 2], vec![1.0, 1.0]).is_err()); // output != 1
        assert!(Architecture::new(vec![4, 0, 1], vec![1.0, 1.0]).is_err());
        assert!(Architecture::new(vec![4, 8, 1], vec![1.0]).is_err());
        assert!(Architecture::new(vec![4, 8, 1], vec![1.0, 0.0]).is_err());
        assert!(Architecture::new(vec![4, 8, 1], vec![1.0, -1.0]).is_err());
        assert!(Architecture::new(vec![4, 8, 1], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn initialization_variance_formulas() {
        assert_eq!(he_variances(&[4, 8, 1]), vec![0.5, 0.25]);
        assert_eq!(lecun_variances(&[4, 8, 1]), vec![0.25, 0.125]);
    }

    #[test]
    fn weight_shapes_follow_widths() {
        let arch = Architecture::he(vec![3, 7, 5, 1]).unwrap();
        let ws = init_weights(&arch, 1);
        assert_eq!(ws.layer(1).shape(), (3, 7));
        assert_eq!(ws.layer(2).shape(), (7, 5));
        assert_eq!(ws.layer(3).shape(), (5, 1));
        assert_eq!(ws.n_params(), 21 + 35 + 5);
    }

    #[test]
    fn sample_variance_matches_requested_variance() {
        let arch = Architecture::new(vec![2, 10_000, 1], vec![0.25, 4.0]).unwrap();
        let ws = init_weights(&arch, 0);
        for (l, want) in [(1usize, 0.25), (2, 4.0)] {
            let w = ws.layer(l);
            let m = w.len() as f64;
            let mean: f64 = w.iter().sum::<f64>() / m;
            let var: f64 = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
            assert!((var / want - 1.0).abs() < 0.05, "layer {l}: sample variance {var}");
        }
    }

    #[test]
    fn weights_are_deterministic_per_seed_and_layer() {
        let arch = Architecture::he(vec![4, 6, 1]).unwrap();
        assert_eq!(init_weights(&arch, 9), init_weights(&arch, 9));
        assert_ne!(init_weights(&arch, 9), init_weights(&arch, 10));
        // The layer stream depends only on (seed, l): widening layer 2 of a
        // deeper net leaves layer 1's draw untouched.
        let deeper = Architecture::he(vec![4, 6, 8, 1]).unwrap();
        assert_eq!(init_weights(&deeper, 9).layer(1), init_weights(&arch, 9).layer(1));
    }

    #[test]
    fn scalar_chain_forward_values() {
        let ws = scalar_chain(1.0, 3.0);
        let t = forward(&ws, &DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(t.pre_activation(1)[0], 2.0);
        assert_eq!(t.feature(1)[0], 2.0);
        assert_eq!(t.output(), 6.0);
        assert_eq!(t.activation_diag(1)[0], 1.0);
        assert_eq!(t.signs[0], vec![1]);

        let t = forward(&ws, &DVector::from_vec(vec![-2.0])).unwrap();
        assert_eq!(t.feature(1)[0], 0.0);
        assert_eq!(t.output(), 0.0);
        assert_eq!(t.activation_diag(1)[0], 0.0);
        assert_eq!(t.signs[0], vec![-1]);

        let t = forward(&ws, &DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(t.signs[0], vec![0]);
        assert_eq!(t.activation_diag(1)[0], 0.0, "derivative at the kink is 0");
    }

    #[test]
    fn hidden_features_apply_relu_to_pre_activations() {
        let arch = Architecture::he(vec![5, 8, 6, 1]).unwrap();
        let ws = init_weights(&arch, 3);
        let x = DVector::from_fn(5, |i, _| (i as f64) - 2.0);
        let t = forward(&ws, &x).unwrap();
        for l in 1..=2 {
            let g = t.pre_activation(l);
            let f = t.feature(l);
            for j in 0..g.len() {
                assert_eq!(f[j], g[j].max(0.0));
                assert_eq!(t.activation_diag(l)[j], f64::from(g[j] > 0.0));
            }
        }
        // Output layer is linear: last pre-activation equals the output.
        assert_eq!(t.pre_activation(3)[0], t.output());
    }

    #[test]
    fn forward_is_positively_homogeneous() {
        let arch = Architecture::he(vec![6, 12, 9, 1]).unwrap();
        let ws = init_weights(&arch, 5);
        let x = DVector::from_fn(6, |i, _| ((i * 7 % 5) as f64) - 1.5);
        let base = forward(&ws, &x).unwrap();
        for c in [0.5, 2.0, 3.7] {
            let scaled = forward(&ws, &(c * &x)).unwrap();
            for l in 0..=3 {
                let want = c * base.feature(l);
                let got = scaled.feature(l);
                let scale = want.norm().max(1.0);
                assert_relative_eq!((want - got).norm(), 0.0, epsilon = 1e-12 * scale);
            }
            // Positive scaling never flips a sign pattern.
            assert_eq!(scaled.signs, base.signs);
        }
    }

    #[test]
    fn batch_rows_match_single_forwards() {
        let arch = Architecture::he(vec![4, 9, 7, 1]).unwrap();
        let ws = init_weights(&arch, 6);
        let x = crate::data::sample(
            &DataSpec::new(Distribution::Gaussian, 5, 4, 13).unwrap(),
        )
        .unwrap();
        let (features, traces) = batch_forward(&ws, &x).unwrap();
        assert_eq!(features.len(), 3);
        assert_eq!(features.layer(0), &x);
        for (i, trace) in traces.iter().enumerate() {
            for l in 0..3 {
                assert_eq!(features.layer(l).row(i).transpose(), *trace.feature(l));
            }
            let single = forward(&ws, &x.row(i).transpose()).unwrap();
            assert_eq!(single, *trace);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let arch = Architecture::he(vec![4, 6, 1]).unwrap();
        let ws = init_weights(&arch, 0);
        assert!(forward(&ws, &DVector::zeros(5)).is_err());
    }

    #[test]
    fn centering_recovers_original_and_small_mean_for_raw_inputs() {
        let arch = Architecture::he(vec![16, 32, 1]).unwrap();
        let ws = init_weights(&arch, 2);
        let spec = DataSpec::new(Distribution::Gaussian, 8, 16, 3).unwrap();
        let x = crate::data::sample(&spec).unwrap();
        let (features, _) = batch_forward(&ws, &x).unwrap();

        // Layer 0 features are the raw zero-mean inputs: the estimated mean
        // shrinks like 1/√mc_samples.
        let (centered, mean) = center_features(&ws, 0, features.layer(0), &spec, 100_000, 99).unwrap();
        assert!(mean.norm() / 4.0 <= 0.05, "mean estimate norm {}", mean.norm());
        for i in 0..8 {
            let restored = centered.row(i).transpose() + &mean;
            assert_relative_eq!((restored - x.row(i).transpose()).norm(), 0.0, epsilon = 1e-12);
        }

        // Hidden-layer centring is deterministic in the seed.
        let (c1, m1) = center_features(&ws, 1, features.layer(1), &spec, 500, 7).unwrap();
        let (c2, m2) = center_features(&ws, 1, features.layer(1), &spec, 500, 7).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(m1, m2);
        // ReLU features have a strictly positive mean.
        assert!(m1.iter().all(|&v| v >= 0.0));
        assert!(m1.norm() > 0.0);
    }

    #[test]
    fn center_features_validates_arguments() {
        let arch = Architecture::he(vec![4, 6, 1]).unwrap();
        let ws = init_weights(&arch, 0);
        let spec = DataSpec::new(Distribution::Gaussian, 4, 4, 0).unwrap();
        let f = DMatrix::zeros(4, 6);
        assert!(center_features(&ws, 2, &f, &spec, 10, 0).is_err()); // layer out of range
        assert!(center_features(&ws, 0, &f, &spec, 10, 0).is_err()); // width mismatch
        assert!(center_features(&ws, 1, &f, &spec, 0, 0).is_err()); // no samples
    }

    /// The number of active ReLUs at a hidden layer concentrates at half the
    /// width: |‖Σ_k‖_F² - n_k/2| ≤ 4√n_k for nearly all draws.
    #[test]
    fn activation_count_concentrates_at_half_width() {
        let n_k = 1024usize;
        let arch = Architecture::he(vec![16, n_k, 1]).unwrap();
        let bound = 4.0 * (n_k as f64).sqrt();
        let mut hits = 0usize;
        for trial in 0..200u64 {
            let ws = init_weights(&arch, 10_000 + trial);
            let x = crate::data::sample(
                &DataSpec::new(Distribution::Gaussian, 1, 16, 20_000 + trial).unwrap(),
            )
            .unwrap();
            let t = forward(&ws, &x.row(0).transpose()).unwrap();
            let count: f64 = t.activation_diag(1).iter().sum();
            if (count - n_k as f64 / 2.0).abs() <= bound {
                hits += 1;
            }
        }
        assert!(hits >= 190, "only {hits}/200 trials inside the band");
    }

    /// Feature norms track the product of layer variances: the ratio
    /// ‖f_k‖² / (d Π n_l β_l²) stays within [0.2, 5] for nearly all draws.
    #[test]
    fn feature_norm_ratio_band() {
        let widths = vec![1024usize, 1024, 1024, 1];
        let arch = Architecture::he(widths.clone()).unwrap();
        let d = widths[0] as f64;
        for k in [1usize, 2] {
            let denom: f64 = d * (1..=k).map(|l| widths[l] as f64 * arch.variance(l)).product::<f64>();
            let mut hits = 0usize;
            for trial in 0..100u64 {
                let ws = init_weights(&arch, 30_000 + trial);
                let x = crate::data::sample(
                    &DataSpec::new(Distribution::Gaussian, 1, widths[0], 40_000 + trial).unwrap(),
                )
                .unwrap();
                let t = forward(&ws, &x.row(0).transpose()).unwrap();
                let ratio = t.feature(k).norm_squared() / denom;
                if (0.2..=5.0).contains(&ratio) {
                    hits += 1;
                }
            }
            assert!(hits >= 95, "layer {k}: only {hits}/100 trials inside the band");
        }
    }
}
