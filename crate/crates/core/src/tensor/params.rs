use indexmap::IndexMap;

use super::{grad, Graph, Result, Scalar, Tensor, TensorError};

/// Named, ordered collection of parameter tensors.
///
/// The fingerprint identifies the architecture that produced the set; it is
/// empty for ad-hoc sets built in tests.
#[derive(Clone, Debug)]
pub struct ParamSet<T: Scalar> {
    params: IndexMap<String, Tensor<T>>,
    fingerprint: String,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new("")
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        ParamSet {
            params: IndexMap::new(),
            fingerprint: fingerprint.into(),
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn set_fingerprint(&mut self, fingerprint: impl Into<String>) {
        self.fingerprint = fingerprint.into();
    }

    /// Adds a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(TensorError::Invalid {
                op: "ParamSet::insert",
                msg: format!("duplicate parameter `{name}`"),
            });
        }
        self.params.insert(name, value);
        Ok(())
    }

    /// Replaces the value of an existing parameter.
    pub fn replace(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        match self.params.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(TensorError::UnknownParam(name.to_string())),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Registers every parameter as a leaf of `graph`.
    pub fn attach(&self, graph: &Graph<T>) -> ParamSet<T> {
        self.map(|t| graph.leaf(t))
    }

    pub fn detach(&self) -> ParamSet<T> {
        self.map(Tensor::detach)
    }

    fn map(&self, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> ParamSet<T> {
        ParamSet {
            params: self.params.iter().map(|(k, v)| (k.clone(), f(v))).collect(),
            fingerprint: self.fingerprint.clone(),
        }
    }

    /// Gradients of `loss` with respect to every parameter.
    pub fn grad(&self, loss: &Tensor<T>, create_higher_order: bool) -> Result<GradMap<T>> {
        let wrt: Vec<&Tensor<T>> = self.params.values().collect();
        let grads = grad(loss, &wrt, create_higher_order)?;
        Ok(GradMap {
            grads: self.params.keys().cloned().zip(grads).collect(),
        })
    }

    /// `θ − lr·g` for every parameter.
    ///
    /// With `differentiable`, the gradients keep their graph connection so an
    /// outer differentiation sees the Hessian terms; otherwise the gradients
    /// are treated as constants.
    pub fn apply_update(&self, grads: &GradMap<T>, lr: f64, differentiable: bool) -> Result<ParamSet<T>> {
        let lr = T::from_f64(lr);
        let mut params = IndexMap::with_capacity(self.params.len());
        for (name, p) in &self.params {
            let g = grads
                .get(name)
                .ok_or_else(|| TensorError::MissingGradient(name.clone()))?;
            let g = if differentiable { g.clone() } else { g.detach() };
            params.insert(name.clone(), p.sub(&g.scale(lr)?)?);
        }
        Ok(ParamSet {
            params,
            fingerprint: self.fingerprint.clone(),
        })
    }

    /// Same parameters with every coordinate of `name` shifted by `delta` at
    /// flat position `index`.
    fn perturbed(&self, name: &str, index: usize, delta: f64) -> ParamSet<T> {
        let mut out = self.detach();
        let t = &self.params[name];
        let mut data = t.to_vec();
        data[index] = T::from_f64(data[index].to_f64() + delta);
        out.params[name] = Tensor::raw(data, t.shape().to_vec());
        out
    }
}

/// Gradient tensors keyed by parameter name.
#[derive(Clone, Debug, Default)]
pub struct GradMap<T: Scalar> {
    grads: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> GradMap<T> {
    pub fn new() -> Self {
        GradMap { grads: IndexMap::new() }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, g: Tensor<T>) {
        self.grads.insert(name.into(), g);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn detach(&self) -> GradMap<T> {
        GradMap {
            grads: self.grads.iter().map(|(k, v)| (k.clone(), v.detach())).collect(),
        }
    }

    /// Element-wise sum; names missing from `self` are taken from `other`.
    pub fn accumulate(&mut self, other: &GradMap<T>) -> Result<()> {
        for (name, g) in &other.grads {
            let next = match self.grads.get(name) {
                Some(prev) => prev.add(g)?,
                None => g.clone(),
            };
            self.grads.insert(name.clone(), next);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(|g| g.data().iter().all(|v| v.is_finite()))
    }
}

/// Central-difference estimate of the gradient of `f` at `params`.
pub fn finite_diff_grad<T: Scalar>(
    mut f: impl FnMut(&ParamSet<T>) -> Result<f64>,
    params: &ParamSet<T>,
    h: f64,
) -> Result<GradMap<T>> {
    if !(h > 0.0) {
        return Err(TensorError::Invalid {
            op: "finite_diff_grad",
            msg: format!("step must be positive, got {h}"),
        });
    }
    let mut out = GradMap::new();
    for (name, t) in params.iter() {
        let mut g = Vec::with_capacity(t.numel());
        for i in 0..t.numel() {
            let plus = f(&params.perturbed(name, i, h))?;
            let minus = f(&params.perturbed(name, i, -h))?;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(TensorError::NonFinite { op: "finite_diff_grad" });
            }
            g.push(T::from_f64((plus - minus) / (2.0 * h)));
        }
        out.insert(name, Tensor::raw(g, t.shape().to_vec()));
    }
    Ok(out)
}
