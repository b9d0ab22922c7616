//! The four-block convolutional backbone, its classifier and relation heads,
//! and parameter checkpoints.
//!
//! Each block is `conv3x3(pad 1) → batchnorm → relu → maxpool 2×2`. Pooling
//! keeps partial border windows, so an extent `h` becomes `ceil(h / 2)` and
//! small inputs never collapse to zero.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};

use crate::image_ops::Image;
use crate::rng::SeededRng;
use crate::tensor::{batchnorm2d, conv2d, maxpool2d_ceil, ParamSet, Scalar, Tensor, TensorError};

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("parameter fingerprint `{found}` does not match model `{expected}`")]
    Fingerprint { expected: String, found: String },
    #[error("input batch has shape {found:?}, model expects [_, {expected:?}]")]
    Input { expected: [usize; 3], found: Vec<usize> },
    #[error("invalid model config: {0}")]
    Config(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Shared convolutional trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackboneConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub blocks: usize,
}

impl BackboneConfig {
    pub fn new(channels: usize, height: usize, width: usize, filters: usize) -> Self {
        BackboneConfig {
            channels,
            height,
            width,
            filters,
            blocks: 4,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 || self.filters == 0 || self.blocks == 0 {
            return Err(ModelError::Config(format!("degenerate backbone {self:?}")));
        }
        Ok(())
    }

    /// `(channels, height, width)` of the embedding.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        let (h, w) = pooled(self.height, self.width, self.blocks);
        (self.filters, h, w)
    }

    fn layers(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c = self.channels;
        for b in 0..self.blocks {
            block_layers(&mut out, &format!("backbone.block{b}"), c, self.filters);
            c = self.filters;
        }
        out
    }

    fn describe(&self) -> String {
        format!(
            "conv3x3-bn-relu-maxpool2ceil x{} in={}x{}x{} f={}",
            self.blocks, self.channels, self.height, self.width, self.filters
        )
    }
}

fn pooled(h: usize, w: usize, times: usize) -> (usize, usize) {
    (0..times).fold((h, w), |(h, w), _| (h.div_ceil(2), w.div_ceil(2)))
}

fn block_layers(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, cin: usize, cout: usize) {
    out.push((format!("{prefix}.conv.weight"), vec![cout, cin, 3, 3]));
    out.push((format!("{prefix}.conv.bias"), vec![cout]));
    out.push((format!("{prefix}.bn.gamma"), vec![cout]));
    out.push((format!("{prefix}.bn.beta"), vec![cout]));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifierConfig {
    pub backbone: BackboneConfig,
    pub n_way: usize,
}

/// Embedding backbone plus the relation module: two conv blocks over the
/// channel-concatenated pair, then `fc(hidden) → relu → fc(1) → sigmoid`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelationConfig {
    pub backbone: BackboneConfig,
    pub hidden: usize,
}

impl RelationConfig {
    pub fn new(backbone: BackboneConfig) -> Self {
        RelationConfig { backbone, hidden: 8 }
    }

    fn flat(&self) -> usize {
        let (f, h, w) = self.backbone.output_shape();
        let (h, w) = pooled(h, w, 2);
        f * h * w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelConfig {
    Classifier(ClassifierConfig),
    Relation(RelationConfig),
}

/// Structured architecture identity: `<kind>:bb=<digest>:head=<digest>`.
///
/// The backbone digest alone decides whether parameters can be transferred
/// between two models.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub kind: String,
    pub backbone: String,
    pub head: String,
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:bb={}:head={}", self.kind, self.backbone, self.head)
    }
}

impl FromStr for Fingerprint {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ModelError::Config(format!("malformed fingerprint `{s}`"));
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let backbone = parts.next().and_then(|p| p.strip_prefix("bb=")).ok_or_else(bad)?;
        let head = parts.next().and_then(|p| p.strip_prefix("head=")).ok_or_else(bad)?;
        if parts.next().is_some() || kind.is_empty() {
            return Err(bad());
        }
        Ok(Fingerprint {
            kind: kind.into(),
            backbone: backbone.into(),
            head: head.into(),
        })
    }
}

fn digest(description: &str, layers: &[(String, Vec<usize>)]) -> String {
    let mut h = Sha256::new();
    h.update(description.as_bytes());
    for (name, shape) in layers {
        h.update(format!("\n{name}{shape:?}").as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

impl ModelConfig {
    pub fn backbone(&self) -> &BackboneConfig {
        match self {
            ModelConfig::Classifier(c) => &c.backbone,
            ModelConfig::Relation(r) => &r.backbone,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone().validate()?;
        match self {
            ModelConfig::Classifier(c) if c.n_way < 2 => Err(ModelError::Config(format!(
                "classifier needs n_way ≥ 2, got {}",
                c.n_way
            ))),
            ModelConfig::Relation(r) if r.hidden == 0 => Err(ModelError::Config("relation hidden size is 0".into())),
            _ => Ok(()),
        }
    }

    fn head_layers(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        match self {
            ModelConfig::Classifier(c) => {
                let (f, h, w) = c.backbone.output_shape();
                out.push(("head.weight".into(), vec![f * h * w, c.n_way]));
                out.push(("head.bias".into(), vec![c.n_way]));
            }
            ModelConfig::Relation(r) => {
                let f = r.backbone.filters;
                block_layers(&mut out, "relation.block0", 2 * f, f);
                block_layers(&mut out, "relation.block1", f, f);
                out.push(("relation.fc1.weight".into(), vec![r.flat(), r.hidden]));
                out.push(("relation.fc1.bias".into(), vec![r.hidden]));
                out.push(("relation.fc2.weight".into(), vec![r.hidden, 1]));
                out.push(("relation.fc2.bias".into(), vec![1]));
            }
        }
        out
    }

    /// Every parameter name and shape, backbone first.
    pub fn layers(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = self.backbone().layers();
        out.extend(self.head_layers());
        out
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let (kind, head_desc) = match self {
            ModelConfig::Classifier(c) => ("classifier", format!("linear n_way={}", c.n_way)),
            ModelConfig::Relation(r) => ("relation", format!("relation 2 blocks fc hidden={} sigmoid", r.hidden)),
        };
        let bb = self.backbone();
        Fingerprint {
            kind: kind.into(),
            backbone: digest(&bb.describe(), &bb.layers()),
            head: digest(&head_desc, &self.head_layers()),
        }
    }

    /// He-normal weights, zero biases, batchnorm `γ = 1, β = 0`. Each tensor
    /// draws from its own stream derived from `seed` and its name.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParamSet<T>> {
        self.validate()?;
        let mut p = ParamSet::new(self.fingerprint().to_string());
        for (name, shape) in self.layers() {
            p.insert(name.clone(), init_tensor(&name, &shape, seed))?;
        }
        Ok(p)
    }
}

fn name_id(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn init_tensor<T: Scalar>(name: &str, shape: &[usize], seed: u64) -> Tensor<T> {
    if name.ends_with(".gamma") {
        return Tensor::ones(shape);
    }
    if name.ends_with(".bias") || name.ends_with(".beta") {
        return Tensor::zeros(shape);
    }
    // conv [out, in, kh, kw] or linear [in, out]
    let fan_in = if shape.len() == 4 {
        shape[1] * shape[2] * shape[3]
    } else {
        shape[0]
    };
    let std = (2.0 / fan_in as f64).sqrt();
    let mut rng = SeededRng::derive(seed, &[name_id(name)]);
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(std * rng.normal())).collect();
    Tensor::from_vec(data, shape).expect("shape matches data")
}

fn check_fingerprint<T: Scalar>(params: &ParamSet<T>, cfg: &ModelConfig) -> Result<()> {
    let expected = cfg.fingerprint().to_string();
    if params.fingerprint() != expected {
        return Err(ModelError::Fingerprint {
            expected,
            found: params.fingerprint().to_string(),
        });
    }
    Ok(())
}

fn check_input<T: Scalar>(x: &Tensor<T>, bb: &BackboneConfig) -> Result<()> {
    let expected = [bb.channels, bb.height, bb.width];
    if x.rank() != 4 || x.shape()[1..] != expected || x.shape()[0] == 0 {
        return Err(ModelError::Input {
            expected,
            found: x.shape().to_vec(),
        });
    }
    Ok(())
}

/// Stacks channel-last images into an `[N, C, H, W]` tensor.
pub fn images_to_tensor<T: Scalar>(images: &[&Image]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| ModelError::Config("empty image batch".into()))?;
    let (h, w, c) = (first.height(), first.width(), first.channels());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if (img.height(), img.width(), img.channels()) != (h, w, c) {
            return Err(ModelError::Input {
                expected: [c, h, w],
                found: vec![img.channels(), img.height(), img.width()],
            });
        }
        let px = img.pixels();
        for ch in 0..c {
            data.extend((0..h * w).map(|i| T::from_f64(px[i * c + ch] as f64)));
        }
    }
    Ok(Tensor::from_vec(data, &[images.len(), c, h, w])?)
}

fn conv_block<T: Scalar>(params: &ParamSet<T>, prefix: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let w = params.get(&format!("{prefix}.conv.weight"))?;
    let b = params.get(&format!("{prefix}.conv.bias"))?;
    let gamma = params.get(&format!("{prefix}.bn.gamma"))?;
    let beta = params.get(&format!("{prefix}.bn.beta"))?;
    let y = conv2d(x, w, Some(b), 1, 1)?;
    let y = batchnorm2d(&y, gamma, beta, T::from_f64(BN_EPS))?.relu()?;
    Ok(maxpool2d_ceil(&y, 2, 2)?)
}

fn trunk<T: Scalar>(params: &ParamSet<T>, bb: &BackboneConfig, x: &Tensor<T>) -> Result<Tensor<T>> {
    check_input(x, bb)?;
    let mut h = x.clone();
    for b in 0..bb.blocks {
        h = conv_block(params, &format!("backbone.block{b}"), &h)?;
    }
    Ok(h)
}

fn linear<T: Scalar>(params: &ParamSet<T>, prefix: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let w = params.get(&format!("{prefix}.weight"))?;
    let b = params.get(&format!("{prefix}.bias"))?;
    Ok(x.matmul(w)?.add(b)?)
}

/// Logits `[B, n_way]`.
pub fn forward_classifier<T: Scalar>(
    params: &ParamSet<T>,
    cfg: &ClassifierConfig,
    images: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_fingerprint(params, &ModelConfig::Classifier(*cfg))?;
    let h = trunk(params, &cfg.backbone, images)?;
    let b = h.shape()[0];
    let flat = h.reshape(&[b, h.numel() / b])?;
    linear(params, "head", &flat)
}

/// Feature maps `[B, filters, H', W']` of the relation model's backbone.
pub fn forward_embedding<T: Scalar>(
    params: &ParamSet<T>,
    cfg: &RelationConfig,
    images: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_fingerprint(params, &ModelConfig::Relation(*cfg))?;
    trunk(params, &cfg.backbone, images)
}

/// Channel-wise concatenation, support features first.
pub fn concat_features<T: Scalar>(f_support: &Tensor<T>, f_query: &Tensor<T>) -> Result<Tensor<T>> {
    if f_support.shape() != f_query.shape() || f_support.rank() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "concat_features",
            lhs: f_support.shape().to_vec(),
            rhs: f_query.shape().to_vec(),
        }
        .into());
    }
    Ok(Tensor::concat(&[f_support, f_query], 1)?)
}

/// Relation scores `[pairs, 1]` in `(0, 1)`.
pub fn forward_relation<T: Scalar>(
    params: &ParamSet<T>,
    cfg: &RelationConfig,
    paired: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_fingerprint(params, &ModelConfig::Relation(*cfg))?;
    let (f, h, w) = cfg.backbone.output_shape();
    let expected = [2 * f, h, w];
    if paired.rank() != 4 || paired.shape()[1..] != expected || paired.shape()[0] == 0 {
        return Err(ModelError::Input {
            expected,
            found: paired.shape().to_vec(),
        });
    }
    let mut x = paired.clone();
    for b in 0..2 {
        x = conv_block(params, &format!("relation.block{b}"), &x)?;
    }
    let n = x.shape()[0];
    let flat = x.reshape(&[n, cfg.flat()])?;
    let hidden = linear(params, "relation.fc1", &flat)?.relu()?;
    Ok(linear(params, "relation.fc2", &hidden)?.sigmoid()?)
}

/// Result of [`transfer_params`].
#[derive(Clone, Debug)]
pub struct Transfer<T: Scalar> {
    pub params: ParamSet<T>,
    /// Names copied from the source.
    pub copied: Vec<String>,
    /// Names freshly initialized because the head changed shape.
    pub reinitialized: Vec<String>,
}

/// Initializes `target` from a trained parameter set of the same backbone.
///
/// Every backbone tensor is copied bit for bit. Head tensors are copied when
/// the source has them with identical shapes and re-initialized from `seed`
/// otherwise (a classifier trained with a different way count).
pub fn transfer_params<T: Scalar>(source: &ParamSet<T>, target: &ModelConfig, seed: u64) -> Result<Transfer<T>> {
    let want = target.fingerprint();
    let have: Fingerprint = source.fingerprint().parse()?;
    if have.kind != want.kind || have.backbone != want.backbone {
        return Err(ModelError::Fingerprint {
            expected: want.to_string(),
            found: source.fingerprint().to_string(),
        });
    }
    let fresh = target.init_params::<T>(seed)?;
    let mut params = ParamSet::new(want.to_string());
    let (mut copied, mut reinitialized) = (Vec::new(), Vec::new());
    for (name, init) in fresh.iter() {
        match source.get(name) {
            Ok(t) if t.shape() == init.shape() => {
                params.insert(name, t.detach())?;
                copied.push(name.to_string());
            }
            _ if name.starts_with("backbone.") => {
                return Err(ModelError::Fingerprint {
                    expected: want.to_string(),
                    found: source.fingerprint().to_string(),
                })
            }
            _ => {
                params.insert(name, init.clone())?;
                reinitialized.push(name.to_string());
            }
        }
    }
    Ok(Transfer {
        params,
        copied,
        reinitialized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, Graph};

    fn classifier(filters: usize, size: usize, n_way: usize) -> ClassifierConfig {
        ClassifierConfig {
            backbone: BackboneConfig::new(1, size, size, filters),
            n_way,
        }
    }

    fn batch(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut r = SeededRng::new(seed);
        Tensor::from_vec((0..n * c * h * w).map(|_| r.uniform()).collect(), &[n, c, h, w]).unwrap()
    }

    #[test]
    fn init_rules() {
        let cfg = ModelConfig::Classifier(classifier(64, 28, 5));
        let a = cfg.init_params::<f64>(3).unwrap();
        let b = cfg.init_params::<f64>(3).unwrap();
        for ((n1, t1), (n2, t2)) in a.iter().zip(b.iter()) {
            assert_eq!(n1, n2);
            assert!(t1.bit_eq(t2));
        }
        for (name, t) in a.iter() {
            if name.ends_with("gamma") {
                assert!(t.data().iter().all(|&v| v == 1.0));
            }
        }
        // 64×64×3×3 kernel: variance ≈ 2 / (64·9)
        let w = a.get("backbone.block1.conv.weight").unwrap();
        assert_eq!(w.numel(), 36864);
        let n = w.numel() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / (64.0 * 9.0);
        assert!((var - target).abs() < 0.2 * target);
        assert!(ModelConfig::Classifier(classifier(0, 28, 5))
            .init_params::<f64>(0)
            .is_err());
    }

    #[test]
    fn fingerprint_tracks_architecture() {
        let a = ModelConfig::Classifier(classifier(8, 28, 5)).fingerprint();
        let b = ModelConfig::Classifier(classifier(8, 28, 20)).fingerprint();
        let c = ModelConfig::Classifier(classifier(16, 28, 5)).fingerprint();
        let r = ModelConfig::Relation(RelationConfig::new(BackboneConfig::new(1, 28, 28, 8))).fingerprint();
        assert_eq!(a.backbone, b.backbone);
        assert_ne!(a.head, b.head);
        assert_ne!(a.backbone, c.backbone);
        assert_ne!(a.kind, r.kind);
        assert_eq!(a.backbone, r.backbone);
        assert_eq!(a.to_string().parse::<Fingerprint>().unwrap(), a);
        assert!("nonsense".parse::<Fingerprint>().is_err());
    }

    #[test]
    fn classifier_shapes_and_purity() {
        let cfg = classifier(4, 14, 3);
        let p = ModelConfig::Classifier(cfg).init_params::<f64>(1).unwrap();
        let x = batch(4, 1, 14, 14, 2);
        let y = forward_classifier(&p, &cfg, &x).unwrap();
        assert_eq!(y.shape(), &[4, 3]);
        // batch of one image repeated: rows identical
        let same = Tensor::concat(&[&x.narrow(0, 0, 1).unwrap(), &x.narrow(0, 0, 1).unwrap()], 0).unwrap();
        let z = forward_classifier(&p, &cfg, &same).unwrap().to_vec();
        assert_eq!(z[..3], z[3..]);
        assert!(forward_classifier(&p, &cfg, &batch(2, 1, 12, 14, 0)).is_err());
        let other = classifier(4, 14, 4);
        assert!(matches!(
            forward_classifier(&p, &other, &x),
            Err(ModelError::Fingerprint { .. })
        ));
    }

    #[test]
    fn batch_permutation_equivariance() {
        let cfg = classifier(3, 14, 2);
        let p = ModelConfig::Classifier(cfg).init_params::<f64>(5).unwrap();
        let x = batch(3, 1, 14, 14, 9);
        let y = forward_classifier(&p, &cfg, &x).unwrap();
        let perm = [2, 0, 1];
        let xp = x.index_select(&perm).unwrap();
        let yp = forward_classifier(&p, &cfg, &xp).unwrap();
        let expect = y.index_select(&perm).unwrap();
        for (a, b) in yp.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        let cfg = classifier(4, 14, 2);
        let p = ModelConfig::Classifier(cfg).init_params::<f64>(7).unwrap();
        let x = batch(3, 1, 14, 14, 1);
        let g = Graph::new();
        let tracked = p.attach(&g);
        let loss = forward_classifier(&tracked, &cfg, &x).unwrap().mean().unwrap();
        let analytic = tracked.grad(&loss, false).unwrap();
        let numeric = finite_diff_grad(
            |q| Ok(forward_classifier(q, &cfg, &x).unwrap().mean()?.item()),
            &p,
            1e-5,
        )
        .unwrap();
        for (name, a) in analytic.iter() {
            let n = numeric.get(name).unwrap();
            for (x, y) in a.data().iter().zip(n.data()) {
                assert!((x - y).abs() <= 1e-6 + 1e-4 * y.abs(), "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn embedding_and_relation() {
        let bb = BackboneConfig::new(3, 32, 32, 6);
        let cfg = RelationConfig::new(bb);
        let p = ModelConfig::Relation(cfg).init_params::<f64>(2).unwrap();
        let x = batch(3, 3, 32, 32, 4);
        let e = forward_embedding(&p, &cfg, &x).unwrap();
        assert_eq!(e.shape(), &[3, 6, 2, 2]);
        assert!(e.bit_eq(&forward_embedding(&p, &cfg, &x).unwrap()));
        let a = e.narrow(0, 0, 2).unwrap();
        let b = e.narrow(0, 1, 2).unwrap();
        let pair = concat_features(&a, &b).unwrap();
        assert_eq!(pair.shape(), &[2, 12, 2, 2]);
        assert!(pair.narrow(1, 0, 6).unwrap().bit_eq(&a));
        assert!(!pair.bit_eq(&concat_features(&b, &a).unwrap()));
        assert!(concat_features(&a, &e).is_err());
        let s = forward_relation(&p, &cfg, &pair).unwrap();
        assert_eq!(s.shape(), &[2, 1]);
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn relation_gradient_matches_finite_differences() {
        let cfg = RelationConfig::new(BackboneConfig::new(1, 14, 14, 2));
        let p = ModelConfig::Relation(cfg).init_params::<f64>(11).unwrap();
        let x = batch(4, 1, 14, 14, 6);
        let f = |q: &ParamSet<f64>| -> Result<Tensor<f64>> {
            let e = forward_embedding(q, &cfg, &x)?;
            let pair = concat_features(&e.narrow(0, 0, 2)?, &e.narrow(0, 2, 2)?)?;
            Ok(forward_relation(q, &cfg, &pair)?.sum()?)
        };
        let g = Graph::new();
        let tracked = p.attach(&g);
        let analytic = tracked.grad(&f(&tracked).unwrap(), false).unwrap();
        let numeric = finite_diff_grad(|q| Ok(f(q).unwrap().item()), &p, 1e-5).unwrap();
        for (name, a) in analytic.iter() {
            for (x, y) in a.data().iter().zip(numeric.get(name).unwrap().data()) {
                assert!((x - y).abs() <= 1e-6 + 1e-4 * y.abs(), "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn transfer_reinitializes_mismatched_head() {
        let five = ModelConfig::Classifier(classifier(4, 14, 5));
        let twenty = ModelConfig::Classifier(classifier(4, 14, 20));
        let src = five.init_params::<f32>(1).unwrap();
        let t = transfer_params(&src, &twenty, 2).unwrap();
        assert_eq!(
            t.reinitialized,
            vec!["head.weight".to_string(), "head.bias".to_string()]
        );
        for name in &t.copied {
            assert!(t.params.get(name).unwrap().bit_eq(src.get(name).unwrap()));
        }
        assert_eq!(t.params.fingerprint(), twenty.fingerprint().to_string());
        let same = transfer_params(&src, &five, 2).unwrap();
        assert!(same.reinitialized.is_empty());
        let wider = ModelConfig::Classifier(classifier(8, 14, 5));
        assert!(transfer_params(&src, &wider, 0).is_err());
        let rel = ModelConfig::Relation(RelationConfig::new(BackboneConfig::new(1, 14, 14, 4)));
        assert!(transfer_params(&src, &rel, 0).is_err());
    }

    #[test]
    fn image_batch_layout() {
        let img = Image::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let t = images_to_tensor::<f32>(&[&img]).unwrap();
        assert_eq!(t.shape(), &[1, 3, 1, 2]);
        assert_eq!(t.to_vec(), vec![0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
        let gray = Image::filled(1, 2, 1, 0.0).unwrap();
        assert!(images_to_tensor::<f32>(&[&img, &gray]).is_err());
    }
}
