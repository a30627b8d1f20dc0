use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{multiplicity, ravel, unravel, LinOp, Operator, Space, SpaceSpec};

/// Serializable description of an operator; every [`LinOp`] carries one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity {
        space: SpaceSpec,
    },
    Zero {
        domain: SpaceSpec,
        codomain: SpaceSpec,
    },
    Scale {
        factor: f64,
        op: Box<OperatorSpec>,
    },
    /// Composition; `ops[0]` is applied first.
    Chain {
        ops: Vec<OperatorSpec>,
    },
    Stack {
        ops: Vec<OperatorSpec>,
    },
    /// Row-major dense matrix.
    Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<SpaceSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        codomain: Option<SpaceSpec>,
    },
    /// Forward differences with the boundary row dropped.
    Grad {
        shape: Vec<usize>,
    },
    /// Symmetrized gradient from order-`order` tensor fields.
    SymGrad {
        shape: Vec<usize>,
        order: usize,
    },
    /// `k`-th derivative tensor.
    GradK {
        shape: Vec<usize>,
        k: usize,
    },
    /// Orthonormal separable Haar wavelet transform.
    Haar {
        shape: Vec<usize>,
    },
    /// Orthonormal separable DCT-II.
    Dct {
        shape: Vec<usize>,
    },
    /// Correlation with a centered kernel, symmetric (reflecting) boundary.
    Conv {
        shape: Vec<usize>,
        kernel_shape: Vec<usize>,
        kernel: Vec<f64>,
    },
    /// Normalized Gaussian blur; `radius` defaults to `ceil(3 sigma)`.
    Blur {
        shape: Vec<usize>,
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<usize>,
    },
    /// Restriction to the listed flat indices.
    Mask {
        shape: Vec<usize>,
        keep: Vec<usize>,
    },
    /// `x -> (x, ..., x)`.
    Duplicate {
        space: SpaceSpec,
        copies: usize,
    },
    /// Projection of a product onto one factor.
    Select {
        parts: Vec<SpaceSpec>,
        index: usize,
    },
    /// Zero-filled injection of one factor into a product.
    Embed {
        parts: Vec<SpaceSpec>,
        index: usize,
    },
    /// One-dimensional `A grad` on first-order fields: channel `j` is `a[j] * w'`.
    AGrad {
        n: usize,
        a: Vec<f64>,
    },
}

impl OperatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorSpec::Identity { .. } => "identity",
            OperatorSpec::Zero { .. } => "zero",
            OperatorSpec::Scale { .. } => "scale",
            OperatorSpec::Chain { .. } => "chain",
            OperatorSpec::Stack { .. } => "stack",
            OperatorSpec::Dense { .. } => "dense",
            OperatorSpec::Grad { .. } => "grad",
            OperatorSpec::SymGrad { .. } => "sym-grad",
            OperatorSpec::GradK { .. } => "grad-k",
            OperatorSpec::Haar { .. } => "haar",
            OperatorSpec::Dct { .. } => "dct",
            OperatorSpec::Conv { .. } => "conv",
            OperatorSpec::Blur { .. } => "blur",
            OperatorSpec::Mask { .. } => "mask",
            OperatorSpec::Duplicate { .. } => "duplicate",
            OperatorSpec::Select { .. } => "select",
            OperatorSpec::Embed { .. } => "embed",
            OperatorSpec::AGrad { .. } => "a-grad",
        }
    }
}

pub fn make_operator(spec: &OperatorSpec) -> Result<LinOp> {
    match spec {
        OperatorSpec::Identity { space } => Ok(LinOp::identity(&Space::from_spec(space)?)),
        OperatorSpec::Zero { domain, codomain } => Ok(LinOp::zero(
            &Space::from_spec(domain)?,
            &Space::from_spec(codomain)?,
        )),
        OperatorSpec::Scale { factor, op } => Ok(make_operator(op)?.scaled(*factor)),
        OperatorSpec::Chain { ops } => {
            LinOp::chain(&ops.iter().map(make_operator).collect::<Result<Vec<_>>>()?)
        }
        OperatorSpec::Stack { ops } => {
            LinOp::stack(&ops.iter().map(make_operator).collect::<Result<Vec<_>>>()?)
        }
        OperatorSpec::Dense {
            rows,
            cols,
            data,
            domain,
            codomain,
        } => {
            if data.len() != rows * cols {
                return Err(Error::DimensionMismatch {
                    context: "dense operator data".into(),
                    expected: rows * cols,
                    got: data.len(),
                });
            }
            let dom = match domain {
                Some(s) => Space::from_spec(s)?,
                None => Space::coeff(*cols)?,
            };
            let cod = match codomain {
                Some(s) => Space::from_spec(s)?,
                None => Space::coeff(*rows)?,
            };
            LinOp::dense(DMatrix::from_row_slice(*rows, *cols, data), &dom, &cod)
        }
        OperatorSpec::Grad { shape } => sym_grad_op(shape, 0, spec.clone()),
        OperatorSpec::SymGrad { shape, order } => {
            if *order == 0 {
                return Err(Error::InvalidParameter(
                    "sym-grad needs order >= 1; use grad on scalar fields".into(),
                ));
            }
            sym_grad_op(shape, *order, spec.clone())
        }
        OperatorSpec::GradK { shape, k } => {
            if *k == 0 {
                return Err(Error::InvalidParameter("grad-k needs k >= 1".into()));
            }
            let mut ops = vec![grad(shape)?];
            for order in 1..*k {
                ops.push(sym_grad(shape, order)?);
            }
            let chain = LinOp::chain(&ops)?;
            Ok(relabel(chain, spec.clone()))
        }
        OperatorSpec::Haar { shape } => {
            let mats = shape
                .iter()
                .map(|&n| haar_matrix(n))
                .collect::<Result<Vec<_>>>()?;
            separable(shape, mats, spec.clone())
        }
        OperatorSpec::Dct { shape } => {
            let mats = shape.iter().map(|&n| dct_matrix(n)).collect();
            separable(shape, mats, spec.clone())
        }
        OperatorSpec::Conv {
            shape,
            kernel_shape,
            kernel,
        } => conv_op(shape, kernel_shape, kernel, spec.clone()),
        OperatorSpec::Blur { shape, sigma, radius } => {
            if !(sigma.is_finite() && *sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("blur sigma must be positive, got {sigma}")));
            }
            let r = radius.unwrap_or((3.0 * sigma).ceil() as usize);
            let k1: Vec<f64> = (0..=2 * r)
                .map(|i| {
                    let x = i as f64 - r as f64;
                    (-0.5 * x * x / (sigma * sigma)).exp()
                })
                .collect();
            let d = shape.len();
            let kshape = vec![2 * r + 1; d];
            let total: usize = kshape.iter().product();
            let mut kernel = vec![0.0; total];
            let mut idx = vec![0; d];
            for (f, kv) in kernel.iter_mut().enumerate() {
                unravel(f, &kshape, &mut idx);
                *kv = idx.iter().map(|&i| k1[i]).product();
            }
            let s: f64 = kernel.iter().sum();
            kernel.iter_mut().for_each(|v| *v /= s);
            conv_op(shape, &kshape, &kernel, spec.clone())
        }
        OperatorSpec::Mask { shape, keep } => {
            let dom = Space::scalar(shape)?;
            if keep.is_empty() {
                return Err(Error::InvalidParameter("mask keeps no entries".into()));
            }
            let mut trip = Vec::with_capacity(keep.len());
            for (r, &c) in keep.iter().enumerate() {
                if c >= dom.dim() {
                    return Err(Error::InvalidParameter(format!(
                        "mask index {c} outside a grid of {} entries",
                        dom.dim()
                    )));
                }
                trip.push((r, c, 1.0));
            }
            let cod = Space::coeff(keep.len())?;
            Ok(sparse(dom, cod, trip, spec.clone()))
        }
        OperatorSpec::Duplicate { space, copies } => {
            if *copies == 0 {
                return Err(Error::InvalidParameter("duplicate needs at least one copy".into()));
            }
            let dom = Space::from_spec(space)?;
            let cod = Space::product(&vec![dom.clone(); *copies])?;
            let n = dom.dim();
            let trip = (0..*copies)
                .flat_map(|c| (0..n).map(move |i| (c * n + i, i, 1.0)))
                .collect();
            Ok(sparse(dom, cod, trip, spec.clone()))
        }
        OperatorSpec::Select { parts, index } | OperatorSpec::Embed { parts, index } => {
            let prod = Space::from_spec(&SpaceSpec::Product { parts: parts.clone() })?;
            let Some((off, part)) = prod.parts().get(*index).cloned() else {
                return Err(Error::InvalidParameter(format!(
                    "factor {index} of a {}-fold product",
                    parts.len()
                )));
            };
            let n = part.dim();
            if matches!(spec, OperatorSpec::Select { .. }) {
                let trip = (0..n).map(|i| (i, off + i, 1.0)).collect();
                Ok(sparse(prod, part, trip, spec.clone()))
            } else {
                let trip = (0..n).map(|i| (off + i, i, 1.0)).collect();
                Ok(sparse(part, prod, trip, spec.clone()))
            }
        }
        OperatorSpec::AGrad { n, a } => {
            if *n < 3 {
                return Err(Error::InvalidParameter("a-grad needs n >= 3".into()));
            }
            if a.is_empty() {
                return Err(Error::InvalidParameter("a-grad needs a non-empty matrix".into()));
            }
            let dom = Space::sym_tensor(&[*n], 1)?;
            let cod = Space::vector(&[n - 2], a.len())?;
            let mut trip = Vec::new();
            for (j, &aj) in a.iter().enumerate() {
                for i in 0..n - 2 {
                    trip.push((j * (n - 2) + i, i + 1, aj));
                    trip.push((j * (n - 2) + i, i, -aj));
                }
            }
            Ok(sparse(dom, cod, trip, spec.clone()))
        }
    }
}

pub fn grad(shape: &[usize]) -> Result<LinOp> {
    make_operator(&OperatorSpec::Grad { shape: shape.to_vec() })
}

pub fn sym_grad(shape: &[usize], order: usize) -> Result<LinOp> {
    make_operator(&OperatorSpec::SymGrad {
        shape: shape.to_vec(),
        order,
    })
}

pub fn grad_k(shape: &[usize], k: usize) -> Result<LinOp> {
    make_operator(&OperatorSpec::GradK { shape: shape.to_vec(), k })
}

pub fn haar(shape: &[usize]) -> Result<LinOp> {
    make_operator(&OperatorSpec::Haar { shape: shape.to_vec() })
}

pub fn dct(shape: &[usize]) -> Result<LinOp> {
    make_operator(&OperatorSpec::Dct { shape: shape.to_vec() })
}

pub fn blur(shape: &[usize], sigma: f64) -> Result<LinOp> {
    make_operator(&OperatorSpec::Blur {
        shape: shape.to_vec(),
        sigma,
        radius: None,
    })
}

pub fn mask(shape: &[usize], keep: &[usize]) -> Result<LinOp> {
    make_operator(&OperatorSpec::Mask {
        shape: shape.to_vec(),
        keep: keep.to_vec(),
    })
}

pub fn duplicate(space: &Space, copies: usize) -> Result<LinOp> {
    make_operator(&OperatorSpec::Duplicate {
        space: space.spec().clone(),
        copies,
    })
}

pub fn select(parts: &[Space], index: usize) -> Result<LinOp> {
    make_operator(&OperatorSpec::Select {
        parts: parts.iter().map(|p| p.spec().clone()).collect(),
        index,
    })
}

pub fn embed(parts: &[Space], index: usize) -> Result<LinOp> {
    make_operator(&OperatorSpec::Embed {
        parts: parts.iter().map(|p| p.spec().clone()).collect(),
        index,
    })
}

fn relabel(op: LinOp, spec: OperatorSpec) -> LinOp {
    let inner = op.clone();
    LinOp::new(op.domain().clone(), op.codomain().clone(), Arc::new(Wrapped(inner)), spec)
}

struct Wrapped(LinOp);

impl Operator for Wrapped {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply_into(x, y);
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        self.0.adjoint_into(y, x);
    }
}

/// Compressed-row sparse matrix.
struct SparseOp {
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseOp {
    fn from_triplets(rows: usize, mut trip: Vec<(usize, usize, f64)>) -> SparseOp {
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; rows + 1];
        let mut col = Vec::with_capacity(trip.len());
        let mut val: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col.push(c);
            val.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOp { row_ptr, col, val }
    }
}

impl Operator for SparseOp {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yr = s;
        }
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.fill(0.0);
        for (r, &yr) in y.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                x[self.col[k]] += self.val[k] * yr;
            }
        }
    }
}

fn sparse(dom: Space, cod: Space, trip: Vec<(usize, usize, f64)>, spec: OperatorSpec) -> LinOp {
    let op = SparseOp::from_triplets(cod.dim(), trip);
    LinOp::new(dom, cod, Arc::new(op), spec)
}

/// Symmetrized forward-difference gradient from order `order` to `order + 1`.
fn sym_grad_op(shape: &[usize], order: usize, spec: OperatorSpec) -> Result<LinOp> {
    let dom = Space::sym_tensor(shape, order)?;
    let cod = Space::sym_tensor(shape, order + 1)?;
    let d = shape.len();
    let mut trip = Vec::new();
    let mut j = vec![0; d];
    let mut src = vec![0; d];
    for c in cod.components() {
        let kappa = &c.multi;
        let mk = multiplicity(kappa);
        for i in 0..d {
            if kappa[i] == 0 {
                continue;
            }
            let mut prev = kappa.clone();
            prev[i] -= 1;
            let s = dom
                .components()
                .iter()
                .find(|sc| sc.multi == prev)
                .expect("lower-order component exists");
            let coef = (mk.sqrt() / multiplicity(&prev).sqrt()) * kappa[i] as f64 / (order + 1) as f64;
            for f in 0..c.len() {
                unravel(f, &c.shape, &mut j);
                let row = c.offset + f;
                src.copy_from_slice(&j);
                let lo = s.offset + ravel(&src, &s.shape);
                src[i] += 1;
                let hi = s.offset + ravel(&src, &s.shape);
                trip.push((row, hi, coef));
                trip.push((row, lo, -coef));
            }
        }
    }
    Ok(sparse(dom, cod, trip, spec))
}

fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * n as isize;
    let m = i.rem_euclid(p);
    if m >= n as isize {
        (p - 1 - m) as usize
    } else {
        m as usize
    }
}

fn conv_op(shape: &[usize], kshape: &[usize], kernel: &[f64], spec: OperatorSpec) -> Result<LinOp> {
    if kshape.len() != shape.len() {
        return Err(Error::InvalidParameter(format!(
            "kernel of rank {} for a grid of rank {}",
            kshape.len(),
            shape.len()
        )));
    }
    let klen: usize = kshape.iter().product();
    if klen != kernel.len() || klen == 0 {
        return Err(Error::DimensionMismatch {
            context: "convolution kernel".into(),
            expected: klen,
            got: kernel.len(),
        });
    }
    let space = Space::scalar(shape)?;
    let d = shape.len();
    let mut trip = Vec::with_capacity(space.dim() * klen);
    let mut j = vec![0; d];
    let mut k = vec![0; d];
    let mut src = vec![0; d];
    for f in 0..space.dim() {
        unravel(f, shape, &mut j);
        for (kf, &kv) in kernel.iter().enumerate() {
            if kv == 0.0 {
                continue;
            }
            unravel(kf, kshape, &mut k);
            for a in 0..d {
                let off = j[a] as isize + k[a] as isize - (kshape[a] / 2) as isize;
                src[a] = reflect(off, shape[a]);
            }
            trip.push((f, ravel(&src, shape), kv));
        }
    }
    Ok(sparse(space.clone(), space, trip, spec))
}

/// Orthonormal Haar analysis matrix for length `n` (a power of two).
fn haar_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "haar transform needs power-of-two extents, got {n}"
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for col in 0..n {
        let mut v = vec![0.0; n];
        v[col] = 1.0;
        let mut len = n;
        let mut tmp = vec![0.0; n];
        while len > 1 {
            let half = len / 2;
            for i in 0..half {
                tmp[i] = h * (v[2 * i] + v[2 * i + 1]);
                tmp[half + i] = h * (v[2 * i] - v[2 * i + 1]);
            }
            v[..len].copy_from_slice(&tmp[..len]);
            len = half;
        }
        m.set_column(col, &nalgebra::DVector::from_vec(v));
    }
    Ok(m)
}

fn dct_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, j| {
        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        s * (PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

/// Applies a square matrix along every axis of a grid.
struct Separable {
    shape: Vec<usize>,
    mats: Vec<DMatrix<f64>>,
}

impl Separable {
    fn run(&self, x: &[f64], y: &mut [f64], transpose: bool) {
        let mut cur = x.to_vec();
        let mut next = vec![0.0; cur.len()];
        let strides = crate::linalg::grid_strides(&self.shape);
        for (a, m) in self.mats.iter().enumerate() {
            let n = self.shape[a];
            let st = strides[a];
            let total = cur.len();
            for base in 0..total {
                // visit each line once, from its first element
                if (base / st) % n != 0 {
                    continue;
                }
                for r in 0..n {
                    let mut s = 0.0;
                    for c in 0..n {
                        let mv = if transpose { m[(c, r)] } else { m[(r, c)] };
                        s += mv * cur[base + c * st];
                    }
                    next[base + r * st] = s;
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        y.copy_from_slice(&cur);
    }
}

impl Operator for Separable {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        self.run(x, y, false);
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        self.run(y, x, true);
    }
}

fn separable(shape: &[usize], mats: Vec<DMatrix<f64>>, spec: OperatorSpec) -> Result<LinOp> {
    let dom = Space::scalar(shape)?;
    let cod = Space::coeff(dom.dim())?;
    Ok(LinOp::new(
        dom,
        cod,
        Arc::new(Separable {
            shape: shape.to_vec(),
            mats,
        }),
        spec,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{analyze, KERNEL_TOL};
    use crate::rng::SplitMix64;

    #[test]
    fn grad_1d_rows() {
        let g = grad(&[4]).unwrap();
        let d = g.to_dense().unwrap();
        let expect = DMatrix::from_row_slice(3, 4, &[-1., 1., 0., 0., 0., -1., 1., 0., 0., 0., -1., 1.]);
        assert_eq!(d, expect);
        assert_eq!(g.apply(&[0., 0., 1., 1.]).unwrap(), vec![0., 1., 0.]);
        let g2 = grad(&[2]).unwrap();
        assert_eq!(g2.adjoint_apply(&[1.0]).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn second_differences_match_dense_product() {
        let g = grad(&[4]).unwrap();
        let s = sym_grad(&[4], 1).unwrap();
        let c = g.then(&s).unwrap();
        assert_eq!(c.apply(&[0., 1., 4., 9.]).unwrap(), vec![2., 2.]);
        let dense = s.to_dense().unwrap() * g.to_dense().unwrap();
        assert!((dense - c.to_dense().unwrap()).norm() < 1e-14);
        let gk = grad_k(&[4], 2).unwrap();
        assert!((gk.to_dense().unwrap() - c.to_dense().unwrap()).norm() < 1e-14);
    }

    #[test]
    fn symgrad_2d_kernel_is_rigid_motions() {
        let s = sym_grad(&[4, 4], 1).unwrap();
        let an = analyze(&s, KERNEL_TOL).unwrap();
        assert_eq!(an.kernel_dim(), 3);
    }

    #[test]
    fn symgrad_of_affine_gradient_vanishes() {
        let shape = [5, 4];
        let u: Vec<f64> = (0..20).map(|f| 2.0 * (f / 4) as f64 - 0.5 * (f % 4) as f64 + 1.0).collect();
        let g = grad(&shape).unwrap().apply(&u).unwrap();
        let e = sym_grad(&shape, 1).unwrap().apply(&g).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn frames_are_orthonormal() {
        let mut rng = SplitMix64::new(5);
        for op in [haar(&[8]).unwrap(), dct(&[8]).unwrap(), haar(&[4, 8]).unwrap(), dct(&[3, 5]).unwrap()] {
            let x = rng.normal_vec(op.domain().dim());
            let y = op.apply(&x).unwrap();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nx - ny).abs() < 1e-12);
            let back = op.adjoint_apply(&y).unwrap();
            assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        assert!(haar(&[6]).is_err());
    }

    #[test]
    fn blur_preserves_constants_and_mask_zero_fills() {
        let b = blur(&[16], 1.0).unwrap();
        let y = b.apply(&[3.0; 16]).unwrap();
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let m = mask(&[4], &[0, 2]).unwrap();
        assert_eq!(m.apply(&[1., 2., 3., 4.]).unwrap(), vec![1., 3.]);
        assert_eq!(m.adjoint_apply(&[1., 3.]).unwrap(), vec![1., 0., 3., 0.]);
    }

    #[test]
    fn constructors_pass_adjoint_test() {
        let ops = vec![
            grad(&[7]).unwrap(),
            grad(&[4, 5]).unwrap(),
            sym_grad(&[5, 4], 1).unwrap(),
            sym_grad(&[5, 5], 2).unwrap(),
            grad_k(&[6, 6], 3).unwrap(),
            haar(&[8, 4]).unwrap(),
            dct(&[6, 3]).unwrap(),
            blur(&[9, 7], 1.2).unwrap(),
            make_operator(&OperatorSpec::Conv {
                shape: vec![10],
                kernel_shape: vec![3],
                kernel: vec![0.5, -1.0, 2.0],
            })
            .unwrap(),
            mask(&[3, 3], &[0, 4, 8]).unwrap(),
            make_operator(&OperatorSpec::AGrad { n: 6, a: vec![1.0, -2.0] }).unwrap(),
        ];
        for op in ops {
            assert!(op.adjoint_mismatch(100, 9) <= 1e-10, "{:?}", op);
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = OperatorSpec::Chain {
            ops: vec![
                OperatorSpec::Grad { shape: vec![4] },
                OperatorSpec::Scale {
                    factor: 2.0,
                    op: Box::new(OperatorSpec::SymGrad { shape: vec![4], order: 1 }),
                },
            ],
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: OperatorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let op = make_operator(&back).unwrap();
        assert_eq!(op.apply(&[0., 1., 4., 9.]).unwrap(), vec![4., 4.]);
    }
}
