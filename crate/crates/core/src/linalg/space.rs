use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a finite-dimensional space.
///
/// Symmetric tensor fields use a staggered layout: the component with
/// multi-index `k` (counts of derivatives per axis) lives on the grid
/// `shape[i] - k[i]`, which is exactly where iterated forward differences
/// with dropped boundary rows are defined. Off-diagonal components are stored
/// scaled by the square root of their multiplicity so that the Euclidean
/// inner product of the storage equals the Frobenius inner product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceSpec {
    Scalar { shape: Vec<usize> },
    Vector { shape: Vec<usize>, channels: usize },
    SymTensor { shape: Vec<usize>, order: usize },
    Coeff { len: usize },
    Product { parts: Vec<SpaceSpec> },
}

/// One contiguous block of a grid-based space.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub offset: usize,
    pub shape: Vec<usize>,
    /// Derivative counts per axis (all zero for scalar and vector channels).
    pub multi: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
struct SpaceInner {
    spec: SpaceSpec,
    dim: usize,
    components: Vec<Component>,
    parts: Vec<(usize, Space)>,
    group_ptr: Vec<usize>,
    group_idx: Vec<usize>,
    channel: Vec<usize>,
    n_channels: usize,
}

/// A finite-dimensional real space with the Euclidean inner product and a
/// pointwise grouping of its entries.
#[derive(Clone)]
pub struct Space(Arc<SpaceInner>);

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Space({})", self)
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.spec {
            SpaceSpec::Scalar { shape } => write!(f, "scalar{:?}", shape),
            SpaceSpec::Vector { shape, channels } => write!(f, "vector{:?}x{}", shape, channels),
            SpaceSpec::SymTensor { shape, order } => write!(f, "sym{}{:?}", order, shape),
            SpaceSpec::Coeff { len } => write!(f, "coeff[{}]", len),
            SpaceSpec::Product { .. } => {
                write!(f, "(")?;
                for (i, (_, p)) in self.0.parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " x ")?;
                    }
                    write!(f, "{}", p)?;
                }
                write!(f, ")")
            }
        }
    }
}

impl PartialEq for Space {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

/// All multi-indices of total order `order` in `d` variables, in
/// descending lexicographic order (`xx, xy, yy` for `d = 2, order = 2`).
pub fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == d {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(d, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    rec(d, order, &mut Vec::new(), &mut out);
    out
}

/// Number of index tuples represented by a multi-index: `k! / prod(k_i!)`.
pub fn multiplicity(multi: &[usize]) -> f64 {
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let k: usize = multi.iter().sum();
    fact(k) / multi.iter().map(|&m| fact(m)).product::<f64>()
}

/// Number of independent entries of a symmetric order-`k` tensor in `d` variables.
pub fn sym_tensor_channels(d: usize, k: usize) -> usize {
    let mut num = 1usize;
    let mut den = 1usize;
    for i in 0..k {
        num *= d + i;
        den *= i + 1;
    }
    num / den
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Row-major index iteration helper.
pub(crate) fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for i in (0..shape.len()).rev() {
        out[i] = flat % shape[i];
        flat /= shape[i];
    }
}

pub(crate) fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    let mut flat = 0;
    for i in 0..shape.len() {
        flat = flat * shape[i] + idx[i];
    }
    flat
}

impl Space {
    pub fn from_spec(spec: &SpaceSpec) -> Result<Space> {
        let check_shape = |shape: &[usize]| -> Result<()> {
            if shape.is_empty() || shape.iter().any(|&n| n == 0) {
                return Err(Error::InvalidParameter(format!(
                    "grid shape {:?} must be non-empty with positive extents",
                    shape
                )));
            }
            Ok(())
        };
        let mut components = Vec::new();
        let mut parts = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut channel = Vec::new();
        let n_channels;
        let dim;
        match spec {
            SpaceSpec::Scalar { shape } => {
                check_shape(shape)?;
                dim = shape.iter().product();
                components.push(Component {
                    offset: 0,
                    shape: shape.clone(),
                    multi: vec![0; shape.len()],
                });
                groups.extend((0..dim).map(|i| vec![i]));
                channel = vec![0; dim];
                n_channels = 1;
            }
            SpaceSpec::Coeff { len } => {
                if *len == 0 {
                    return Err(Error::InvalidParameter("coefficient space of length 0".into()));
                }
                dim = *len;
                components.push(Component {
                    offset: 0,
                    shape: vec![*len],
                    multi: vec![0],
                });
                groups.extend((0..dim).map(|i| vec![i]));
                channel = vec![0; dim];
                n_channels = 1;
            }
            SpaceSpec::Vector { shape, channels } => {
                check_shape(shape)?;
                if *channels == 0 {
                    return Err(Error::InvalidParameter("vector field with 0 channels".into()));
                }
                let npix: usize = shape.iter().product();
                dim = npix * channels;
                for c in 0..*channels {
                    components.push(Component {
                        offset: c * npix,
                        shape: shape.clone(),
                        multi: vec![0; shape.len()],
                    });
                    channel.extend(std::iter::repeat_n(c, npix));
                }
                for p in 0..npix {
                    groups.push((0..*channels).map(|c| c * npix + p).collect());
                }
                n_channels = *channels;
            }
            SpaceSpec::SymTensor { shape, order } => {
                check_shape(shape)?;
                if *order == 0 {
                    return Err(Error::InvalidParameter(
                        "symmetric tensor field of order 0; use a scalar space".into(),
                    ));
                }
                let d = shape.len();
                let mut offset = 0;
                for (ci, multi) in multi_indices(d, *order).into_iter().enumerate() {
                    let cshape: Vec<usize> = shape
                        .iter()
                        .zip(&multi)
                        .map(|(&n, &k)| n.checked_sub(k).unwrap_or(0))
                        .collect();
                    if cshape.iter().any(|&n| n == 0) {
                        return Err(Error::InvalidParameter(format!(
                            "grid {:?} too small for order-{} tensor fields",
                            shape, order
                        )));
                    }
                    let len: usize = cshape.iter().product();
                    channel.extend(std::iter::repeat_n(ci, len));
                    components.push(Component {
                        offset,
                        shape: cshape,
                        multi,
                    });
                    offset += len;
                }
                dim = offset;
                n_channels = components.len();
                // group by pixel of the full grid
                let npix: usize = shape.iter().product();
                let mut idx = vec![0; d];
                for p in 0..npix {
                    unravel(p, shape, &mut idx);
                    let mut g = Vec::new();
                    for c in &components {
                        if idx.iter().zip(&c.shape).all(|(&i, &n)| i < n) {
                            g.push(c.offset + ravel(&idx, &c.shape));
                        }
                    }
                    if !g.is_empty() {
                        groups.push(g);
                    }
                }
            }
            SpaceSpec::Product { parts: specs } => {
                if specs.is_empty() {
                    return Err(Error::InvalidParameter("empty product space".into()));
                }
                let mut offset = 0;
                let mut ch_off = 0;
                for s in specs {
                    let p = Space::from_spec(s)?;
                    for g in p.groups() {
                        groups.push(g.iter().map(|&i| i + offset).collect());
                    }
                    channel.extend(p.0.channel.iter().map(|&c| c + ch_off));
                    ch_off += p.n_channels();
                    parts.push((offset, p.clone()));
                    offset += p.dim();
                }
                dim = offset;
                n_channels = ch_off;
            }
        }
        let mut group_ptr = Vec::with_capacity(groups.len() + 1);
        let mut group_idx = Vec::with_capacity(dim);
        group_ptr.push(0);
        for g in groups {
            group_idx.extend(g);
            group_ptr.push(group_idx.len());
        }
        Ok(Space(Arc::new(SpaceInner {
            spec: spec.clone(),
            dim,
            components,
            parts,
            group_ptr,
            group_idx,
            channel,
            n_channels,
        })))
    }

    pub fn scalar(shape: &[usize]) -> Result<Space> {
        Space::from_spec(&SpaceSpec::Scalar {
            shape: shape.to_vec(),
        })
    }

    pub fn vector(shape: &[usize], channels: usize) -> Result<Space> {
        Space::from_spec(&SpaceSpec::Vector {
            shape: shape.to_vec(),
            channels,
        })
    }

    /// Tensor field of the given order; order 0 is the scalar field.
    pub fn sym_tensor(shape: &[usize], order: usize) -> Result<Space> {
        if order == 0 {
            return Space::scalar(shape);
        }
        Space::from_spec(&SpaceSpec::SymTensor {
            shape: shape.to_vec(),
            order,
        })
    }

    pub fn coeff(len: usize) -> Result<Space> {
        Space::from_spec(&SpaceSpec::Coeff { len })
    }

    pub fn product(parts: &[Space]) -> Result<Space> {
        Space::from_spec(&SpaceSpec::Product {
            parts: parts.iter().map(|p| p.spec().clone()).collect(),
        })
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.0.spec
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    /// Grid shape for grid-based spaces.
    pub fn shape(&self) -> Option<&[usize]> {
        match &self.0.spec {
            SpaceSpec::Scalar { shape }
            | SpaceSpec::Vector { shape, .. }
            | SpaceSpec::SymTensor { shape, .. } => Some(shape),
            _ => None,
        }
    }

    /// Tensor order: 0 for scalar fields, `k` for order-`k` fields.
    pub fn tensor_order(&self) -> Option<usize> {
        match &self.0.spec {
            SpaceSpec::Scalar { .. } => Some(0),
            SpaceSpec::SymTensor { order, .. } => Some(*order),
            _ => None,
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.0.components
    }

    /// `(offset, part)` pairs of a product space; empty otherwise.
    pub fn parts(&self) -> &[(usize, Space)] {
        &self.0.parts
    }

    pub fn is_product(&self) -> bool {
        matches!(self.0.spec, SpaceSpec::Product { .. })
    }

    pub fn n_groups(&self) -> usize {
        self.0.group_ptr.len() - 1
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.0.group_idx[self.0.group_ptr[g]..self.0.group_ptr[g + 1]]
    }

    pub fn groups(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.n_groups()).map(move |g| self.group(g))
    }

    pub fn channel_of(&self, i: usize) -> usize {
        self.0.channel[i]
    }

    pub fn n_channels(&self) -> usize {
        self.0.n_channels
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

pub(crate) fn grid_strides(shape: &[usize]) -> Vec<usize> {
    strides(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_tensor_layout_2d() {
        let s = Space::sym_tensor(&[4, 4], 2).unwrap();
        let shapes: Vec<_> = s.components().iter().map(|c| c.shape.clone()).collect();
        assert_eq!(shapes, vec![vec![2, 4], vec![3, 3], vec![4, 2]]);
        assert_eq!(s.dim(), 8 + 9 + 8);
        assert_eq!(s.n_channels(), sym_tensor_channels(2, 2));
        // every entry belongs to exactly one group
        let mut seen = vec![0; s.dim()];
        for g in s.groups() {
            for &i in g {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn channel_counts_match_symmetric_tensor_entries() {
        for d in 1..=3 {
            for k in 1..=3 {
                assert_eq!(multi_indices(d, k).len(), sym_tensor_channels(d, k));
            }
        }
        assert_eq!(sym_tensor_channels(2, 2), 3);
        assert_eq!(sym_tensor_channels(3, 2), 6);
    }

    #[test]
    fn one_dimensional_fields_are_singletons() {
        let s = Space::sym_tensor(&[8], 2).unwrap();
        assert_eq!(s.dim(), 6);
        assert_eq!(s.n_groups(), 6);
    }

    #[test]
    fn product_dims_add() {
        let a = Space::scalar(&[5]).unwrap();
        let b = Space::vector(&[5], 2).unwrap();
        let p = Space::product(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.dim(), a.dim() + b.dim());
        assert_eq!(p.parts()[1].0, 5);
        assert_eq!(p.n_groups(), 5 + 5);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(Space::scalar(&[]).is_err());
        assert!(Space::scalar(&[3, 0]).is_err());
        assert!(Space::sym_tensor(&[2], 2).is_err());
    }
}
