//! Truncated bosonic Fock spaces attached to a finite system.
//!
//! Flat indices are system-major: `flat = s * fock_dim + k`, so a product state
//! `rho_sys (x) sigma` is the Kronecker product in that order.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Clone, PartialEq)]
pub struct HilbertLayout {
    system_dim: usize,
    mode_caps: Vec<usize>,
    excitation_cap: Option<usize>,
    states: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

impl fmt::Debug for HilbertLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HilbertLayout")
            .field("system_dim", &self.system_dim)
            .field("mode_caps", &self.mode_caps)
            .field("excitation_cap", &self.excitation_cap)
            .field("fock_dim", &self.states.len())
            .finish()
    }
}

impl HilbertLayout {
    /// Occupations `n_j <= mode_caps[j]` and, if given, `sum n_j <= excitation_cap`.
    pub fn new(system_dim: usize, mode_caps: Vec<usize>, excitation_cap: Option<usize>) -> Result<Self> {
        if system_dim == 0 {
            return Err(Error::InvalidInput("system dimension must be positive".into()));
        }
        let total = excitation_cap.unwrap_or(usize::MAX);
        let mut states = Vec::new();
        let mut current = vec![0u16; mode_caps.len()];
        enumerate(&mode_caps, total, 0, 0, &mut current, &mut states);
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Self {
            system_dim,
            mode_caps,
            excitation_cap,
            states,
            index,
        })
    }

    pub fn boxed(system_dim: usize, mode_caps: Vec<usize>) -> Result<Self> {
        Self::new(system_dim, mode_caps, None)
    }

    /// Hierarchy-style truncation `sum n_j <= depth`.
    pub fn excitation(system_dim: usize, modes: usize, depth: usize) -> Result<Self> {
        Self::new(system_dim, vec![depth; modes], Some(depth))
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn modes(&self) -> usize {
        self.mode_caps.len()
    }

    pub fn mode_caps(&self) -> &[usize] {
        &self.mode_caps
    }

    pub fn excitation_cap(&self) -> Option<usize> {
        self.excitation_cap
    }

    pub fn fock_dim(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.system_dim * self.states.len()
    }

    pub fn occupation(&self, fock_index: usize) -> &[u16] {
        &self.states[fock_index]
    }

    pub fn fock_index(&self, occupation: &[u16]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn flat(&self, system: usize, fock_index: usize) -> usize {
        system * self.states.len() + fock_index
    }

    pub fn split(&self, flat: usize) -> (usize, usize) {
        (flat / self.states.len(), flat % self.states.len())
    }

    pub fn vacuum_index(&self) -> usize {
        0
    }

    /// Fock indices on the outer surface of the truncation: total occupation equal
    /// to the excitation cap, or any mode at its own cap.
    pub fn boundary_states(&self) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, occ)| {
                let total: usize = occ.iter().map(|&n| n as usize).sum();
                self.excitation_cap == Some(total)
                    || occ.iter().zip(&self.mode_caps).any(|(&n, &cap)| n as usize == cap)
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn check_square(&self, rho: &CMat) -> Result<()> {
        if rho.shape() != (self.dim(), self.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "operator is {:?}, layout dimension is {}",
                rho.shape(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn enumerate(caps: &[usize], total: usize, mode: usize, used: usize, current: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if mode == caps.len() {
        out.push(current.clone());
        return;
    }
    for n in 0..=caps[mode].min(total - used) {
        current[mode] = n as u16;
        enumerate(caps, total, mode + 1, used + n, current, out);
    }
    current[mode] = 0;
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed; exact zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (r, c) => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != Complex64::new(0.0, 0.0));
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            cols: merged.iter().map(|t| t.1).collect(),
            values: merged.iter().map(|t| t.2).collect(),
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect())
    }

    pub fn from_dense(m: &CMat) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != Complex64::new(0.0, 0.0) {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self::from_triplets(self.nrows, self.ncols, self.triplets().chain(other.triplets()).collect())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for (r, k, a) in self.triplets() {
            for j in other.row_ptr[k]..other.row_ptr[k + 1] {
                t.push((r, other.cols[j], a * other.values[j]));
            }
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// `out += self * x`.
    pub fn mul_dense_into(&self, x: &CMat, out: &mut CMat) {
        assert_eq!(self.ncols, x.nrows());
        for col in 0..x.ncols() {
            let xc = x.column(col);
            let xs = xc.as_slice();
            let mut oc = out.column_mut(col);
            let os = oc.as_mut_slice();
            for r in 0..self.nrows {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.values[k] * xs[self.cols[k]];
                }
                os[r] += acc;
            }
        }
    }

    pub fn mul_dense(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.nrows, x.ncols());
        self.mul_dense_into(x, &mut out);
        out
    }

    /// `out += x * self`.
    pub fn dense_mul_into(&self, x: &CMat, out: &mut CMat) {
        assert_eq!(x.ncols(), self.nrows);
        let rows = x.nrows();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for r in 0..self.nrows {
            let xc = &xs[r * rows..(r + 1) * rows];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (c, v) = (self.cols[k], self.values[k]);
                let oc = &mut os[c * rows..(c + 1) * rows];
                for (o, xv) in oc.iter_mut().zip(xc) {
                    *o += xv * v;
                }
            }
        }
    }

    pub fn dense_mul(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(x.nrows(), self.ncols);
        self.dense_mul_into(x, &mut out);
        out
    }
}

/// Operator on a layout, tagged with a readable label.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub label: String,
    pub matrix: SparseMatrix,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.shape().0
    }

    pub fn adjoint(&self) -> Self {
        Self {
            label: format!("{}^H", self.label),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn to_dense(&self) -> CMat {
        self.matrix.to_dense()
    }
}

/// `b_j` with `<.., n_j - 1, ..| b_j |.., n_j, ..> = sqrt(n_j)`.
pub fn mode_lowering(layout: &HilbertLayout, mode: usize) -> Result<OperatorMatrix> {
    if mode >= layout.modes() {
        return Err(Error::IndexOutOfRange {
            index: mode,
            modes: layout.modes(),
        });
    }
    let mut t = Vec::new();
    let mut lowered = Vec::with_capacity(layout.modes());
    for k in 0..layout.fock_dim() {
        let occ = layout.occupation(k);
        let n = occ[mode];
        if n == 0 {
            continue;
        }
        lowered.clear();
        lowered.extend_from_slice(occ);
        lowered[mode] -= 1;
        if let Some(k2) = layout.fock_index(&lowered) {
            let amp = Complex64::new((n as f64).sqrt(), 0.0);
            for s in 0..layout.system_dim() {
                t.push((layout.flat(s, k2), layout.flat(s, k), amp));
            }
        }
    }
    Ok(OperatorMatrix {
        label: format!("b_{}", mode + 1),
        matrix: SparseMatrix::from_triplets(layout.dim(), layout.dim(), t),
    })
}

pub fn mode_raising(layout: &HilbertLayout, mode: usize) -> Result<OperatorMatrix> {
    let mut op = mode_lowering(layout, mode)?.adjoint();
    op.label = format!("b_{}^H", mode + 1);
    Ok(op)
}

/// Diagonal `b_j^H b_j`.
pub fn number_operator(layout: &HilbertLayout, mode: usize) -> Result<OperatorMatrix> {
    if mode >= layout.modes() {
        return Err(Error::IndexOutOfRange {
            index: mode,
            modes: layout.modes(),
        });
    }
    let mut t = Vec::new();
    for s in 0..layout.system_dim() {
        for k in 0..layout.fock_dim() {
            let n = layout.occupation(k)[mode] as f64;
            t.push((layout.flat(s, k), layout.flat(s, k), Complex64::new(n, 0.0)));
        }
    }
    Ok(OperatorMatrix {
        label: format!("N_{}", mode + 1),
        matrix: SparseMatrix::from_triplets(layout.dim(), layout.dim(), t),
    })
}

/// `sys_op (x) 1`.
pub fn embed_system_operator(layout: &HilbertLayout, sys_op: &CMat) -> Result<OperatorMatrix> {
    let d = layout.system_dim();
    if sys_op.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!(
            "system operator is {:?}, system dimension is {d}",
            sys_op.shape()
        )));
    }
    let mut t = Vec::new();
    for a in 0..d {
        for b in 0..d {
            let v = sys_op[(a, b)];
            if v != Complex64::new(0.0, 0.0) {
                for k in 0..layout.fock_dim() {
                    t.push((layout.flat(a, k), layout.flat(b, k), v));
                }
            }
        }
    }
    Ok(OperatorMatrix {
        label: "S(x)1".into(),
        matrix: SparseMatrix::from_triplets(layout.dim(), layout.dim(), t),
    })
}

/// `rho_sys (x) |vac><vac|`.
pub fn vacuum_product(layout: &HilbertLayout, rho_sys: &CMat) -> Result<CMat> {
    let d = layout.system_dim();
    if rho_sys.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!(
            "system state is {:?}, system dimension is {d}",
            rho_sys.shape()
        )));
    }
    let mut rho = CMat::zeros(layout.dim(), layout.dim());
    let v = layout.vacuum_index();
    for a in 0..d {
        for b in 0..d {
            rho[(layout.flat(a, v), layout.flat(b, v))] = rho_sys[(a, b)];
        }
    }
    Ok(rho)
}

/// `psi_sys (x) |vac>`.
pub fn vacuum_product_vector(layout: &HilbertLayout, psi_sys: &[Complex64]) -> Result<CMat> {
    if psi_sys.len() != layout.system_dim() {
        return Err(Error::ShapeMismatch(format!(
            "system vector has length {}, system dimension is {}",
            psi_sys.len(),
            layout.system_dim()
        )));
    }
    let mut psi = CMat::zeros(layout.dim(), 1);
    for (a, v) in psi_sys.iter().enumerate() {
        psi[(layout.flat(a, layout.vacuum_index()), 0)] = *v;
    }
    Ok(psi)
}

/// Block `<n| rho |m>` as a system matrix.
pub fn fock_block(layout: &HilbertLayout, rho: &CMat, n: usize, m: usize) -> CMat {
    let d = layout.system_dim();
    CMat::from_fn(d, d, |a, b| rho[(layout.flat(a, n), layout.flat(b, m))])
}

pub fn partial_trace_modes(layout: &HilbertLayout, rho: &CMat) -> Result<CMat> {
    layout.check_square(rho)?;
    let d = layout.system_dim();
    Ok(CMat::from_fn(d, d, |a, b| {
        (0..layout.fock_dim())
            .map(|k| rho[(layout.flat(a, k), layout.flat(b, k))])
            .sum()
    }))
}

pub fn vacuum_project(layout: &HilbertLayout, rho: &CMat) -> Result<CMat> {
    layout.check_square(rho)?;
    let v = layout.vacuum_index();
    Ok(fock_block(layout, rho, v, v))
}

/// Vacuum component of a state vector.
pub fn vacuum_amplitudes(layout: &HilbertLayout, psi: &CMat) -> Result<Vec<Complex64>> {
    if psi.nrows() != layout.dim() {
        return Err(Error::ShapeMismatch(format!(
            "state has {} rows, layout dimension is {}",
            psi.nrows(),
            layout.dim()
        )));
    }
    Ok((0..layout.system_dim())
        .map(|a| psi[(layout.flat(a, layout.vacuum_index()), 0)])
        .collect())
}

/// Frobenius weight of `rho` on rows or columns touching the truncation boundary,
/// relative to the total.
pub fn boundary_weight(layout: &HilbertLayout, rho: &CMat) -> f64 {
    let mut on_boundary = vec![false; layout.fock_dim()];
    for k in layout.boundary_states() {
        on_boundary[k] = true;
    }
    let mut edge = 0.0;
    let mut total = 0.0;
    for c in 0..rho.ncols() {
        for r in 0..rho.nrows() {
            let w = rho[(r, c)].norm_sqr();
            total += w;
            let rk = layout.split(r).1;
            let ck = if rho.ncols() == 1 { 0 } else { layout.split(c).1 };
            if on_boundary[rk] || (rho.ncols() > 1 && on_boundary[ck]) {
                edge += w;
            }
        }
    }
    if total > 0.0 {
        (edge / total).sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{projector, sigma_x, sigma_z};
    use crate::linalg::{c, frobenius};

    fn kron(a: &CMat, b: &CMat) -> CMat {
        a.kronecker(b)
    }

    #[test]
    fn single_mode_ladder() {
        let l = HilbertLayout::boxed(1, vec![2]).unwrap();
        let b = mode_lowering(&l, 0).unwrap().to_dense();
        assert_eq!(b.shape(), (3, 3));
        assert_eq!(b[(0, 1)], c(1.0, 0.0));
        assert!((b[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        assert!((frobenius(&b) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn commutator_on_interior() {
        let l = HilbertLayout::boxed(1, vec![4]).unwrap();
        let b = mode_lowering(&l, 0).unwrap().to_dense();
        let comm = &b * b.adjoint() - b.adjoint() * &b;
        for n in 0..4 {
            for m in 0..4 {
                let expected = if n == m { 1.0 } else { 0.0 };
                assert!((comm[(n, m)] - c(expected, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn cross_mode_commutators_vanish() {
        let cases = [
            (HilbertLayout::boxed(2, vec![2, 3]).unwrap(), usize::MAX),
            (HilbertLayout::excitation(1, 3, 3).unwrap(), 3),
        ];
        for (l, cap) in cases {
            for j in 0..l.modes() {
                for k in (0..l.modes()).filter(|&k| k != j) {
                    let bj = mode_lowering(&l, j).unwrap().to_dense();
                    let bk = mode_lowering(&l, k).unwrap().to_dense();
                    let comm = &bj * bk.adjoint() - bk.adjoint() * &bj;
                    for col in 0..l.dim() {
                        let total: usize = l.occupation(l.split(col).1).iter().map(|&n| n as usize).sum();
                        if total < cap {
                            assert!(comm.column(col).norm() < 1e-14, "[b_{j}, b_{k}^H] != 0");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn two_mode_matches_kronecker() {
        let l = HilbertLayout::boxed(1, vec![1, 1]).unwrap();
        let b = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let id = CMat::identity(2, 2);
        assert!(frobenius(&(mode_lowering(&l, 0).unwrap().to_dense() - kron(&b, &id))) < 1e-15);
        assert!(frobenius(&(mode_lowering(&l, 1).unwrap().to_dense() - kron(&id, &b))) < 1e-15);

        let l = HilbertLayout::boxed(2, vec![1, 1]).unwrap();
        let id2 = CMat::identity(2, 2);
        let expected = kron(&id2, &kron(&b, &id));
        assert!(frobenius(&(mode_lowering(&l, 0).unwrap().to_dense() - expected)) < 1e-15);
        let s = embed_system_operator(&l, &sigma_z()).unwrap().to_dense();
        assert!(frobenius(&(s - kron(&sigma_z(), &CMat::identity(4, 4)))) < 1e-15);
    }

    #[test]
    fn excitation_cap_agrees_with_box() {
        let boxed = HilbertLayout::boxed(1, vec![3, 3]).unwrap();
        let capped = HilbertLayout::excitation(1, 2, 3).unwrap();
        assert_eq!(capped.fock_dim(), 10);
        let bb = mode_lowering(&boxed, 1).unwrap().to_dense();
        let bc = mode_lowering(&capped, 1).unwrap().to_dense();
        for i in 0..capped.fock_dim() {
            for j in 0..capped.fock_dim() {
                let bi = boxed.fock_index(capped.occupation(i)).unwrap();
                let bj = boxed.fock_index(capped.occupation(j)).unwrap();
                assert_eq!(bc[(i, j)], bb[(bi, bj)]);
            }
        }
    }

    #[test]
    fn index_maps_are_inverse() {
        let l = HilbertLayout::new(3, vec![2, 1, 3], Some(4)).unwrap();
        for k in 0..l.fock_dim() {
            assert_eq!(l.fock_index(l.occupation(k)), Some(k));
        }
        for f in 0..l.dim() {
            let (s, k) = l.split(f);
            assert_eq!(l.flat(s, k), f);
        }
    }

    #[test]
    fn mode_out_of_range() {
        let l = HilbertLayout::boxed(1, vec![2]).unwrap();
        assert!(matches!(mode_lowering(&l, 1), Err(Error::IndexOutOfRange { index: 1, modes: 1 })));
    }

    #[test]
    fn readouts_distinguish_vacuum() {
        let l = HilbertLayout::boxed(2, vec![2]).unwrap();
        let rho_sys = projector(&[c(0.6, 0.0), c(0.0, 0.8)]);
        let rho = vacuum_product(&l, &rho_sys).unwrap();
        assert!(frobenius(&(partial_trace_modes(&l, &rho).unwrap() - &rho_sys)) < 1e-15);
        assert!(frobenius(&(vacuum_project(&l, &rho).unwrap() - &rho_sys)) < 1e-15);

        let one = projector(&[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let rho = kron(&rho_sys, &one);
        assert!(frobenius(&vacuum_project(&l, &rho).unwrap()) < 1e-15);
        assert!(frobenius(&(partial_trace_modes(&l, &rho).unwrap() - &rho_sys)) < 1e-15);
    }

    #[test]
    fn partial_trace_keeps_trace() {
        let l = HilbertLayout::excitation(2, 2, 3).unwrap();
        let n = l.dim();
        let rho = CMat::from_fn(n, n, |i, j| c(((i * 7 + j * 3) % 11) as f64, ((i + 2 * j) % 5) as f64));
        let reduced = partial_trace_modes(&l, &rho).unwrap();
        assert!((reduced.trace() - rho.trace()).norm() < 1e-12);
        assert!(frobenius(&vacuum_project(&l, &rho).unwrap()) <= frobenius(&rho));
    }

    #[test]
    fn shape_errors() {
        let l = HilbertLayout::boxed(2, vec![2]).unwrap();
        assert!(matches!(embed_system_operator(&l, &CMat::zeros(3, 3)), Err(Error::ShapeMismatch(_))));
        assert!(matches!(partial_trace_modes(&l, &CMat::zeros(2, 2)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn sparse_products_match_dense() {
        let l = HilbertLayout::excitation(2, 2, 2).unwrap();
        let b = mode_lowering(&l, 1).unwrap();
        let s = embed_system_operator(&l, &sigma_x()).unwrap();
        let n = l.dim();
        let x = CMat::from_fn(n, n, |i, j| c((i as f64 - j as f64).sin(), (i * j) as f64 * 0.01));
        let (bd, sd) = (b.to_dense(), s.to_dense());
        assert!(frobenius(&(b.matrix.mul_dense(&x) - &bd * &x)) < 1e-12);
        assert!(frobenius(&(b.matrix.dense_mul(&x) - &x * &bd)) < 1e-12);
        assert!(frobenius(&(s.matrix.matmul(&b.matrix).to_dense() - &sd * &bd)) < 1e-12);
        assert!(frobenius(&(s.matrix.add(&b.matrix).to_dense() - (&sd + &bd))) < 1e-12);
    }
}
