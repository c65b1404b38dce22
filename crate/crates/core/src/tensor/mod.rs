//! Dense tensors and elementwise evaluation.

pub mod nonlin;
pub mod scalar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use nonlin::{sigmoid_approx, tanh_approx, NonlinMode, TANH_CLAMP};
pub use scalar::{env_lookup, Env, EvalCtx, ScalarFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemType {
    #[default]
    F32,
    F64,
}

impl ElemType {
    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            ElemType::F32 => x as f32 as f64,
            ElemType::F64 => x,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            ElemType::F32 => 4,
            ElemType::F64 => 8,
        }
    }
}

impl std::str::FromStr for ElemType {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "f32" | "float32" => Ok(ElemType::F32),
            "f64" | "float64" => Ok(ElemType::F64),
            _ => Err(format!("unknown precision `{s}` (expected f32|f64)")),
        }
    }
}

/// Row-major dense tensor. Values are held as `f64` and rounded to `elem`
/// on construction and on every arithmetic result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub elem: ElemType,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, elem: ElemType, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                n
            )));
        }
        let data = data.into_iter().map(|x| elem.round(x)).collect();
        Ok(Tensor { shape, elem, data })
    }

    pub fn zeros(shape: Vec<usize>, elem: ElemType) -> Result<Self> {
        check_shape(&shape)?;
        let n = shape.iter().product();
        Ok(Tensor {
            shape,
            elem,
            data: vec![0.0; n],
        })
    }

    pub fn from_fn(shape: Vec<usize>, elem: ElemType, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Tensor::zeros(shape, elem)?;
        let mut idx = vec![0usize; t.shape.len()];
        for flat in 0..t.data.len() {
            t.data[flat] = elem.round(f(&idx));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < t.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.shape.len() {
            return None;
        }
        let mut off = 0;
        for (&x, &e) in idx.iter().zip(&self.shape) {
            if x >= e {
                return None;
            }
            off = off * e + x;
        }
        Some(off)
    }

    pub fn get(&self, idx: &[usize]) -> Option<f64> {
        self.offset(idx).map(|o| self.data[o])
    }

    /// Elements per leading-dimension row.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[r * w..(r + 1) * w]
    }

    /// Multi-index of a flat offset.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for d in (0..self.shape.len()).rev() {
            idx[d] = flat % self.shape[d];
            flat /= self.shape[d];
        }
        idx
    }

    pub fn cast(&self, elem: ElemType) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            elem,
            data: self.data.iter().map(|&x| elem.round(x)).collect(),
        }
    }

    /// Order-sensitive FNV-1a hash over the value bits.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in self.shape.iter().map(|&e| e as u64).chain(self.data.iter().map(|x| x.to_bits())) {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor rank must be at least 1".into()));
    }
    if let Some(d) = shape.iter().position(|&e| e == 0) {
        return Err(Error::Shape(format!("extent of dimension {d} is 0 in shape {shape:?}")));
    }
    Ok(())
}

/// Apply `f` elementwise; `Load(k)` reads operand `k` at the current element.
/// All operands must have exactly the same shape.
pub fn tensor_ewise(f: &ScalarFn<usize>, inputs: &[&Tensor], mode: NonlinMode) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Shape("tensor_ewise needs at least one operand".into()))?;
    for (k, t) in inputs.iter().enumerate().skip(1) {
        if t.shape != first.shape {
            return Err(Error::Shape(format!(
                "operand {k} has shape {:?}, expected {:?} (operand 0)",
                t.shape, first.shape
            )));
        }
    }
    let mut bad = None;
    f.visit_loads(&mut |&k| {
        if k >= inputs.len() && bad.is_none() {
            bad = Some(k);
        }
    });
    if let Some(k) = bad {
        return Err(Error::Shape(format!(
            "expression reads operand {k} but only {} were given",
            inputs.len()
        )));
    }
    let elem = first.elem;
    let mut ctx = EvalCtx::new(mode, elem);
    let mut env = Env::new();
    let mut data = Vec::with_capacity(first.len());
    for e in 0..first.len() {
        let v = f
            .eval::<std::convert::Infallible, _>(&mut ctx, &mut env, &mut |&k, _, _| Ok(inputs[k].data[e]))
            .unwrap_or_else(|x| match x {});
        data.push(elem.round(v));
    }
    Ok(Tensor {
        shape: first.shape.clone(),
        elem,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    type E = ScalarFn<usize>;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), ElemType::F64, data.to_vec()).unwrap()
    }

    #[test]
    fn add_example() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 2], &[1., 1., 1., 1.]);
        let r = tensor_ewise(&E::add(E::Load(0), E::Load(1)), &[&a, &b], NonlinMode::Exact).unwrap();
        assert_eq!(r.data, vec![2., 3., 4., 5.]);
        assert_eq!(r.shape, vec![2, 2]);
    }

    #[test]
    fn tanh_examples() {
        let z = t(&[1, 2], &[0., 0.]);
        let r = tensor_ewise(&E::tanh(E::Load(0)), &[&z], NonlinMode::Exact).unwrap();
        assert_eq!(r.data, vec![0., 0.]);
        let x = t(&[1, 2], &[4., 6.]);
        let r = tensor_ewise(&E::tanh(E::Load(0)), &[&x], NonlinMode::Exact).unwrap();
        // (e^2x - 1) / (e^2x + 1)
        let oracle = |v: f64| ((2.0 * v).exp() - 1.0) / ((2.0 * v).exp() + 1.0);
        assert!((r.data[0] - 0.999329).abs() <= 1e-6);
        assert!((r.data[1] - 0.999988).abs() <= 1e-6);
        assert!((r.data[0] - oracle(4.0)).abs() <= 1e-12);
    }

    #[test]
    fn shape_mismatch_names_operand() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[1, 4], &[1., 1., 1., 1.]);
        let err = tensor_ewise(&E::add(E::Load(0), E::Load(1)), &[&a, &b], NonlinMode::Exact).unwrap_err();
        assert!(matches!(err, Error::Shape(ref m) if m.contains("operand 1")), "{err}");
    }

    #[test]
    fn tensor_invariants() {
        assert!(Tensor::new(vec![2, 2], ElemType::F64, vec![0.0; 3]).is_err());
        assert!(Tensor::zeros(vec![], ElemType::F64).is_err());
        assert!(Tensor::zeros(vec![3, 0], ElemType::F64).is_err());
        let x = Tensor::new(vec![1], ElemType::F32, vec![0.1]).unwrap();
        assert_eq!(x.data[0], 0.1f32 as f64);
    }

    #[test]
    fn unravel_matches_offset() {
        let x = Tensor::zeros(vec![2, 3, 4], ElemType::F64).unwrap();
        for f in 0..x.len() {
            assert_eq!(x.offset(&x.unravel(f)), Some(f));
        }
    }

    #[test]
    fn deterministic() {
        let a = Tensor::from_fn(vec![3, 5], ElemType::F32, |i| (i[0] as f64 - 1.3) * (i[1] as f64 + 0.7)).unwrap();
        let f = E::sigmoid(E::mul(E::Load(0), E::tanh(E::Load(0))));
        let r1 = tensor_ewise(&f, &[&a], NonlinMode::Rational).unwrap();
        let r2 = tensor_ewise(&f, &[&a], NonlinMode::Rational).unwrap();
        assert_eq!(r1.content_hash(), r2.content_hash());
    }
}
