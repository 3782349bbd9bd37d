//! Linearized Riemann-Hilbert analysis: assembly of the boundary matrix
//! G(zeta), its structured block form in the quadric case, partial indices
//! through the explicit block reduction, the Maslov index as a winding
//! number, and kernel bases of the linearized operator f -> 2 Re[conj(G) f]
//! (numeric by SVD, explicit by the closed-form parameterization).
//!
//! Column convention: G acts on lifts reordered as (g, h, h~, g~), matching
//! the (w, z, z~, w~) variable order in which the matrix is upper block
//! triangular at t = 0:
//!
//!   G = [ I_d / 2    B(zeta)     0       ]
//!       [ 0          G_2(zeta)  C(zeta)  ]
//!       [ 0          0          -i zeta I_d ]
//!
//! with G_2 = [[zeta A^T, I_n], [i zeta A^T, -i I_n]], A = sum_j c_j A_j.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::discs::{AnalyticDisc, FactoredDisc, LiftedDisc};
use crate::error::{Error, Result};
use crate::geometry::{DefiningFunction, HermitianPencil};
use crate::grid::{self, BoundaryGrid};
use crate::linalg;
use crate::par;

const MAX_WINDING_GRID: usize = 1 << 14;

/// A matrix-valued polynomial in zeta.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPoly {
    coeffs: Vec<DMatrix<C64>>,
}

impl MatrixPoly {
    pub fn new(coeffs: Vec<DMatrix<C64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("matrix polynomial needs a coefficient".into()));
        }
        let (r, c) = (coeffs[0].nrows(), coeffs[0].ncols());
        if coeffs.iter().any(|m| m.nrows() != r || m.ncols() != c) {
            return Err(Error::InvalidArgument("coefficient shapes differ".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn constant(m: DMatrix<C64>) -> Self {
        Self { coeffs: vec![m] }
    }

    pub fn nrows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn ncols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, q: usize) -> DMatrix<C64> {
        self.coeffs
            .get(q)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.nrows(), self.ncols()))
    }

    pub fn eval(&self, zeta: C64) -> DMatrix<C64> {
        let mut acc = DMatrix::<C64>::zeros(self.nrows(), self.ncols());
        for m in self.coeffs.iter().rev() {
            acc = acc * zeta + m;
        }
        acc
    }

    pub fn right_mul(&self, x: &DMatrix<C64>) -> Self {
        Self { coeffs: self.coeffs.iter().map(|m| m * x).collect() }
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|m| DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]))
            .collect();
        Self { coeffs }
    }

    fn max_coeff_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|m| m.iter().map(|c| c.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Fits a matrix polynomial of degree <= `max_deg` to samples on the
    /// uniform grid; errors if negative-frequency content is present.
    pub fn fit(samples: &[DMatrix<C64>], grid: &BoundaryGrid, max_deg: usize) -> Result<Self> {
        let (r, c) = (samples[0].nrows(), samples[0].ncols());
        let scale = samples
            .iter()
            .map(|m| m.iter().map(|x| x.norm()).fold(0.0, f64::max))
            .fold(f64::MIN_POSITIVE, f64::max);
        let mut coeffs = vec![DMatrix::<C64>::zeros(r, c); max_deg + 1];
        for i in 0..r {
            for j in 0..c {
                let entry: Vec<C64> = samples.iter().map(|m| m[(i, j)]).collect();
                let dft = grid::dft_forward(&entry);
                for (k, v) in dft.iter().enumerate() {
                    let freq = grid::bin_frequency(k, grid.len());
                    if (0..=max_deg as i64).contains(&freq) {
                        coeffs[freq as usize][(i, j)] = *v;
                    } else if v.norm() > 1e-10 * scale {
                        return Err(Error::NonPTypeBlock);
                    }
                }
            }
        }
        Ok(Self { coeffs })
    }
}

/// Structured block form of the boundary matrix in the quadric case.
#[derive(Debug, Clone)]
pub struct StructuredBlocks {
    pub n: usize,
    pub d: usize,
    /// d x d constant block (I_d / 2 for the normalized quadric rows).
    pub g1: MatrixPoly,
    /// 2n x 2n middle block.
    pub g2: MatrixPoly,
    /// d x d bottom block (-i zeta I_d).
    pub g3: MatrixPoly,
    /// d x 2n upper corner; (1 - zeta) B_1 at the constrained base disc.
    pub b: MatrixPoly,
    /// 2n x d right corner.
    pub c: MatrixPoly,
}

impl StructuredBlocks {
    /// Reassembles the full matrix at a point.
    pub fn eval(&self, zeta: C64) -> DMatrix<C64> {
        let (n, d) = (self.n, self.d);
        let size = 2 * n + 2 * d;
        let mut out = DMatrix::<C64>::zeros(size, size);
        out.view_mut((0, 0), (d, d)).copy_from(&self.g1.eval(zeta));
        out.view_mut((0, d), (d, 2 * n)).copy_from(&self.b.eval(zeta));
        out.view_mut((d, d), (2 * n, 2 * n)).copy_from(&self.g2.eval(zeta));
        out.view_mut((d, d + 2 * n), (2 * n, d)).copy_from(&self.c.eval(zeta));
        out.view_mut((d + 2 * n, d + 2 * n), (d, d)).copy_from(&self.g3.eval(zeta));
        out
    }
}

#[derive(Debug, Clone)]
enum GSource {
    Poly(MatrixPoly),
    Conormal { def: DefiningFunction, base: LiftedDisc },
}

/// The boundary matrix G on a uniform grid, with enough provenance to be
/// re-evaluated on finer grids for winding refinement.
#[derive(Debug, Clone)]
pub struct BoundaryMatrix {
    size: usize,
    dims: Option<(usize, usize)>,
    grid: BoundaryGrid,
    samples: Vec<DMatrix<C64>>,
    source: GSource,
    row_perm: Option<Vec<usize>>,
    right: Option<DMatrix<C64>>,
    structured: Option<StructuredBlocks>,
    min_abs_det: f64,
}

/// Reorders gradient columns from the natural (z, w, z~, w~) order to the
/// (w, z, z~, w~) order in which G is block triangular.
pub(crate) fn reorder_grad_columns(grad: &DMatrix<C64>, n: usize, d: usize) -> DMatrix<C64> {
    let size = 2 * n + 2 * d;
    debug_assert_eq!(grad.ncols(), size);
    let mut out = DMatrix::<C64>::zeros(grad.nrows(), size);
    for j in 0..d {
        out.set_column(j, &grad.column(n + j));
    }
    for k in 0..n {
        out.set_column(d + k, &grad.column(k));
    }
    for k in 0..size - (n + d) {
        out.set_column(n + d + k, &grad.column(n + d + k));
    }
    out
}

/// Reorders stacked lift values (h, g, h~, g~) to (g, h, h~, g~).
pub(crate) fn reorder_values(values: &[C64], n: usize, d: usize) -> DVector<C64> {
    let size = 2 * n + 2 * d;
    debug_assert_eq!(values.len(), size);
    DVector::from_fn(size, |i, _| {
        if i < d {
            values[n + i]
        } else if i < n + d {
            values[i - d]
        } else {
            values[i]
        }
    })
}

impl BoundaryMatrix {
    fn finish(
        size: usize,
        dims: Option<(usize, usize)>,
        grid: BoundaryGrid,
        source: GSource,
        row_perm: Option<Vec<usize>>,
        right: Option<DMatrix<C64>>,
        structured: Option<StructuredBlocks>,
    ) -> Result<Self> {
        let mut out = Self {
            size,
            dims,
            grid,
            samples: Vec::new(),
            source,
            row_perm,
            right,
            structured,
            min_abs_det: 0.0,
        };
        out.samples = out.sample_grid(&out.grid)?;
        out.min_abs_det = out
            .samples
            .iter()
            .map(|m| m.clone().lu().determinant().norm())
            .fold(f64::INFINITY, f64::min);
        Ok(out)
    }

    /// Synthetic boundary matrix from a matrix polynomial (tests, reductions).
    pub fn from_poly(poly: MatrixPoly, m_grid: usize) -> Result<Self> {
        if poly.nrows() != poly.ncols() {
            return Err(Error::InvalidArgument("boundary matrix must be square".into()));
        }
        let grid = BoundaryGrid::new(m_grid)?;
        Self::finish(poly.nrows(), None, grid, GSource::Poly(poly), None, None, None)
    }

    pub fn with_dims(mut self, n: usize, d: usize) -> Result<Self> {
        if 2 * n + 2 * d != self.size {
            return Err(Error::InvalidArgument("dims do not match matrix size".into()));
        }
        self.dims = Some((n, d));
        Ok(self)
    }

    fn eval_raw(&self, zeta: C64) -> Result<DMatrix<C64>> {
        let base = match &self.source {
            GSource::Poly(p) => p.eval(zeta),
            GSource::Conormal { def, base } => {
                let (n, d) = (def.n(), def.d());
                let p = crate::conormal::LiftPoint::from_stacked(&base.eval_stacked(zeta), n, d);
                let rg = crate::conormal::rows_and_grad_at(def, &p, zeta)?;
                reorder_grad_columns(&rg.grad, n, d)
            }
        };
        let permuted = match &self.row_perm {
            None => base,
            Some(perm) => {
                let mut out = DMatrix::<C64>::zeros(self.size, self.size);
                for (i, &p) in perm.iter().enumerate() {
                    out.set_row(i, &base.row(p));
                }
                out
            }
        };
        Ok(match &self.right {
            None => permuted,
            Some(x) => permuted * x,
        })
    }

    fn sample_grid(&self, grid: &BoundaryGrid) -> Result<Vec<DMatrix<C64>>> {
        par::try_map_indexed(grid.len(), |i| self.eval_raw(grid.point(i)))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    pub fn grid(&self) -> &BoundaryGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[DMatrix<C64>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &DMatrix<C64> {
        &self.samples[i]
    }

    pub fn structured(&self) -> Option<&StructuredBlocks> {
        self.structured.as_ref()
    }

    /// min over the grid of |det G|; totally-real analyses require it > 0.
    pub fn min_abs_det(&self) -> f64 {
        self.min_abs_det
    }

    /// Row permutation `i -> perm[i]`; drops the structured form.
    pub fn row_permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.size {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let composed = match &self.row_perm {
            None => perm.to_vec(),
            Some(old) => perm.iter().map(|&i| old[i]).collect(),
        };
        Self::finish(
            self.size,
            self.dims,
            self.grid.clone(),
            self.source.clone(),
            Some(composed),
            self.right.clone(),
            None,
        )
    }

    /// Right multiplication by a constant matrix; drops the structured form.
    pub fn right_multiplied(&self, x: &DMatrix<C64>) -> Result<Self> {
        if x.nrows() != self.size || x.ncols() != self.size {
            return Err(Error::InvalidArgument("right factor shape mismatch".into()));
        }
        let composed = match &self.right {
            None => x.clone(),
            Some(old) => old * x,
        };
        Self::finish(
            self.size,
            self.dims,
            self.grid.clone(),
            self.source.clone(),
            self.row_perm.clone(),
            Some(composed),
            None,
        )
    }
}

/// Assembles G(zeta): derivatives of the defining rows with respect to the
/// conjugated variables at the base lift, columns ordered (w, z, z~, w~).
pub fn assemble_g(
    def: &DefiningFunction,
    base: &LiftedDisc,
    c: &[f64],
    m_grid: usize,
) -> Result<BoundaryMatrix> {
    let (n, d) = (def.n(), def.d());
    if base.n() != n || base.d() != d {
        return Err(Error::InvalidArgument("base lift dimensions do not match".into()));
    }
    if c.len() != d {
        return Err(Error::InvalidArgument("c must have d entries".into()));
    }
    let grid = BoundaryGrid::new(m_grid)?;
    let structured = if def.is_quadric() { Some(structured_blocks(def.pencil(), base)?) } else { None };
    BoundaryMatrix::finish(
        2 * n + 2 * d,
        Some((n, d)),
        grid,
        GSource::Conormal { def: def.clone(), base: base.clone() },
        None,
        None,
        structured,
    )
}

fn structured_blocks(pencil: &HermitianPencil, base: &LiftedDisc) -> Result<StructuredBlocks> {
    let (n, d) = (pencil.n(), pencil.d());
    let i1 = C64::new(0.0, 1.0);
    let h0 = &base.h;
    let gt0 = &base.gt;
    let deg_h = h0.degree();
    let deg_gt = gt0.degree();

    let g1 = MatrixPoly::constant(DMatrix::from_diagonal_element(d, d, C64::new(0.5, 0.0)));

    // G2 = [[2 sum_j gt_j(zeta) A_j^T, I], [2i sum_j gt_j(zeta) A_j^T, -i I]].
    let mut g2_coeffs = vec![DMatrix::<C64>::zeros(2 * n, 2 * n); deg_gt + 2];
    for q in 0..=deg_gt {
        for k in 0..n {
            for m in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for j in 0..d {
                    s += 2.0 * gt0.coefficient(j, q) * pencil.matrix(j)[(m, k)];
                }
                g2_coeffs[q][(k, m)] = s;
                g2_coeffs[q][(n + k, m)] = i1 * s;
            }
        }
    }
    for k in 0..n {
        g2_coeffs[0][(k, n + k)] = C64::new(1.0, 0.0);
        g2_coeffs[0][(n + k, n + k)] = -i1;
    }
    let g2 = MatrixPoly::new(g2_coeffs)?;

    let mut g3_coeffs = vec![DMatrix::<C64>::zeros(d, d); 2];
    for j in 0..d {
        g3_coeffs[1][(j, j)] = -i1;
    }
    let g3 = MatrixPoly::new(g3_coeffs)?;

    // B entries (j, m) = -(A_j h0(zeta))_m on the z columns, zero on z~.
    let mut b_coeffs = vec![DMatrix::<C64>::zeros(d, 2 * n); deg_h + 1];
    for q in 0..=deg_h {
        for j in 0..d {
            let aj = pencil.matrix(j);
            for m in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for t in 0..n {
                    s += aj[(m, t)] * h0.coefficient(t, q);
                }
                b_coeffs[q][(j, m)] = -s;
            }
        }
    }
    let b = MatrixPoly::new(b_coeffs)?;

    // C rows k: 2 h0(zeta)^T conj((A_j)_k); rows n+k: -2i times the same.
    let mut c_coeffs = vec![DMatrix::<C64>::zeros(2 * n, d); deg_h + 1];
    for q in 0..=deg_h {
        for k in 0..n {
            for j in 0..d {
                let aj = pencil.matrix(j);
                let mut s = C64::new(0.0, 0.0);
                for m in 0..n {
                    s += 2.0 * h0.coefficient(m, q) * aj[(m, k)].conj();
                }
                c_coeffs[q][(k, j)] = s;
                c_coeffs[q][(n + k, j)] = -i1 * s;
            }
        }
    }
    let c = MatrixPoly::new(c_coeffs)?;

    Ok(StructuredBlocks { n, d, g1, g2, g3, b, c })
}

/// Index bookkeeping of the linearized problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexData {
    pub partial_indices: Vec<i64>,
    pub maslov: i64,
}

fn phases_from_dets(samples: &[DMatrix<C64>], size: usize) -> Result<Vec<C64>> {
    let sign = if size % 2 == 0 { 1.0 } else { -1.0 };
    samples
        .iter()
        .map(|m| {
            let det = m.clone().lu().determinant();
            if det.norm() == 0.0 {
                return Err(Error::InvalidArgument("G singular on the grid".into()));
            }
            // det(-conj(G)^{-1} G) = (-1)^N det(G) / conj(det(G)), unit modulus.
            let w = det / det.conj();
            Ok(w * sign)
        })
        .collect()
}

fn winding_of_phases(phases: &[C64]) -> (f64, f64) {
    let m = phases.len();
    let mut total = 0.0;
    let mut max_inc: f64 = 0.0;
    for i in 0..m {
        let inc = (phases[(i + 1) % m] / phases[i]).arg();
        max_inc = max_inc.max(inc.abs());
        total += inc;
    }
    (total, max_inc)
}

/// Maslov index: winding number of det(-conj(G)^{-1} G), computed from
/// principal-branch phase increments, refining the grid by doubling until
/// every increment is below pi/2.
pub fn maslov_index(g: &BoundaryMatrix) -> Result<i64> {
    let mut grid = g.grid().clone();
    let mut samples_owned;
    let mut samples: &[DMatrix<C64>] = g.samples();
    loop {
        let phases = phases_from_dets(samples, g.size())?;
        let (total, max_inc) = winding_of_phases(&phases);
        if max_inc < std::f64::consts::FRAC_PI_2 {
            let winding = total / std::f64::consts::TAU;
            let rounded = winding.round();
            if (winding - rounded).abs() > 0.05 {
                return Err(Error::WindingUnresolved { max_increment: max_inc, grid: grid.len() });
            }
            return Ok(rounded as i64);
        }
        let next = grid.len() * 2;
        if next > MAX_WINDING_GRID {
            return Err(Error::WindingUnresolved { max_increment: max_inc, grid: grid.len() });
        }
        grid = BoundaryGrid::new(next)?;
        samples_owned = g.sample_grid(&grid)?;
        samples = &samples_owned;
    }
}

/// Winding number of the determinant of a matrix polynomial symbol.
pub fn symbol_winding(poly: &MatrixPoly, m_grid: usize) -> Result<i64> {
    let grid = BoundaryGrid::new(m_grid)?;
    let phases: Vec<C64> = grid
        .points()
        .iter()
        .map(|&z| {
            let det = poly.eval(z).lu().determinant();
            if det.norm() == 0.0 {
                return Err(Error::InvalidArgument("symbol determinant vanishes".into()));
            }
            Ok(det / det.norm())
        })
        .collect::<Result<_>>()?;
    let (total, max_inc) = winding_of_phases(&phases);
    if max_inc >= std::f64::consts::FRAC_PI_2 {
        return symbol_winding(poly, m_grid * 2);
    }
    Ok((total / std::f64::consts::TAU).round() as i64)
}

/// Explicit Birkhoff factorization data for a small block:
/// `block = b_plus * diag(zeta^k) * b_minus`.
#[derive(Debug, Clone)]
pub struct BirkhoffFactors {
    pub b_plus: DMatrix<C64>,
    pub indices: Vec<i64>,
    pub b_minus: DMatrix<C64>,
}

fn detect_monomial(poly: &MatrixPoly, i: usize, j: usize) -> Option<(C64, usize)> {
    let scale = poly.max_coeff_norm().max(f64::MIN_POSITIVE);
    let mut found = None;
    for q in 0..=poly.degree() {
        let v = poly.coeff(q)[(i, j)];
        if v.norm() > 1e-10 * scale {
            if found.is_some() {
                return None;
            }
            found = Some((v, q));
        }
    }
    found
}

/// Factors the block symbols met along the quadric reduction: constant
/// invertible blocks, diagonal monomial blocks, and the antidiagonal
/// monomial blocks of P-type. Everything else is rejected.
pub fn birkhoff_factor_2x2(block: &MatrixPoly) -> Result<BirkhoffFactors> {
    let size = block.nrows();
    if size != block.ncols() || size == 0 || size > 2 {
        return Err(Error::NonPTypeBlock);
    }
    let scale = block.max_coeff_norm().max(f64::MIN_POSITIVE);
    let entry = |i: usize, j: usize| detect_monomial(block, i, j);
    let zero = |i: usize, j: usize| {
        (0..=block.degree()).all(|q| block.coeff(q)[(i, j)].norm() <= 1e-10 * scale)
    };

    let factors = if size == 1 {
        let (s, k) = entry(0, 0).ok_or(Error::NonPTypeBlock)?;
        BirkhoffFactors {
            b_plus: DMatrix::from_element(1, 1, s),
            indices: vec![k as i64],
            b_minus: DMatrix::identity(1, 1),
        }
    } else if zero(0, 1) && zero(1, 0) {
        let (s0, k0) = entry(0, 0).ok_or(Error::NonPTypeBlock)?;
        let (s1, k1) = entry(1, 1).ok_or(Error::NonPTypeBlock)?;
        BirkhoffFactors {
            b_plus: DMatrix::from_diagonal(&DVector::from_vec(vec![s0, s1])),
            indices: vec![k0 as i64, k1 as i64],
            b_minus: DMatrix::identity(2, 2),
        }
    } else if zero(0, 0) && zero(1, 1) {
        let (s01, k01) = entry(0, 1).ok_or(Error::NonPTypeBlock)?;
        let (s10, k10) = entry(1, 0).ok_or(Error::NonPTypeBlock)?;
        if k01 != k10 {
            return Err(Error::NonPTypeBlock);
        }
        let z = C64::new(0.0, 0.0);
        BirkhoffFactors {
            b_plus: DMatrix::from_row_slice(2, 2, &[z, s01, s10, z]),
            indices: vec![k01 as i64, k10 as i64],
            b_minus: DMatrix::identity(2, 2),
        }
    } else {
        return Err(Error::NonPTypeBlock);
    };

    // Multiply-back check on a sample grid.
    let grid = BoundaryGrid::new(16)?;
    for &z in grid.points() {
        let mut mid = DMatrix::<C64>::zeros(size, size);
        for (i, &k) in factors.indices.iter().enumerate() {
            mid[(i, i)] = z.powi(k as i32);
        }
        let rebuilt = &factors.b_plus * mid * &factors.b_minus;
        let diff = (&rebuilt - block.eval(z)).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if diff > 1e-12 * scale.max(1.0) {
            return Err(Error::NonPTypeBlock);
        }
    }
    Ok(factors)
}

/// Per-block partial indices of the structured quadric matrix: d zeros from
/// the constant block, 2n ones from the middle block via the reduction to
/// R(zeta) blocks, and d twos from -i zeta I_d.
pub fn partial_indices_structured(g: &BoundaryMatrix) -> Result<IndexData> {
    let blocks = g.structured().ok_or(Error::StructuredFormRequired)?;
    let (n, d) = (blocks.n, blocks.d);
    let fit_grid = BoundaryGrid::new(32)?;
    let mut indices = Vec::with_capacity(2 * n + 2 * d);

    // Constant invertible block: all indices zero.
    if blocks.g1.degree() != 0 && blocks.g1.max_coeff_norm() > 0.0 {
        let tail: f64 = (1..=blocks.g1.degree())
            .map(|q| blocks.g1.coeff(q).iter().map(|c| c.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if tail > 1e-12 * blocks.g1.max_coeff_norm() {
            return Err(Error::NonPTypeBlock);
        }
    }
    if linalg::complex_rank(&blocks.g1.coeff(0), 1e-10) != d {
        return Err(Error::NonPTypeBlock);
    }
    indices.extend(std::iter::repeat(0i64).take(d));

    // Middle block: verify G2 = [[zeta T, I], [i zeta T, -i I]], right
    // multiply by diag(T^{-1}, I) and permute into n copies of R(zeta).
    let i1 = C64::new(0.0, 1.0);
    let t = {
        let c1 = blocks.g2.coeff(1);
        DMatrix::from_fn(n, n, |k, m| c1[(k, m)])
    };
    {
        let mut expected = vec![DMatrix::<C64>::zeros(2 * n, 2 * n); 2];
        for k in 0..n {
            for m in 0..n {
                expected[1][(k, m)] = t[(k, m)];
                expected[1][(n + k, m)] = i1 * t[(k, m)];
            }
            expected[0][(k, n + k)] = C64::new(1.0, 0.0);
            expected[0][(n + k, n + k)] = -i1;
        }
        let scale = blocks.g2.max_coeff_norm().max(f64::MIN_POSITIVE);
        for q in 0..=blocks.g2.degree().max(1) {
            let diff = (&blocks.g2.coeff(q) - expected.get(q).cloned().unwrap_or_else(|| DMatrix::zeros(2 * n, 2 * n)))
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max);
            if diff > 1e-10 * scale {
                return Err(Error::NonPTypeBlock);
            }
        }
    }
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("transposed combination matrix is singular".into()))?;
    let mut right = DMatrix::<C64>::identity(2 * n, 2 * n);
    right.view_mut((0, 0), (n, n)).copy_from(&t_inv);
    let flat = blocks.g2.right_mul(&right);
    for k in 0..n {
        let r_block = flat.submatrix(&[k, n + k], &[k, n + k]);
        // P = -conj(R)^{-1} R on the boundary.
        let p_samples: Vec<DMatrix<C64>> = fit_grid
            .points()
            .iter()
            .map(|&z| {
                let r = r_block.eval(z);
                let rc = r.map(|c| c.conj());
                let inv = rc
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidArgument("R block singular on the grid".into()))?;
                Ok(-(inv * r))
            })
            .collect::<Result<_>>()?;
        let p = MatrixPoly::fit(&p_samples, &fit_grid, 4)?;
        let factors = birkhoff_factor_2x2(&p)?;
        indices.extend(factors.indices);
    }

    // Bottom block: -i zeta I_d, indices all two.
    for j in 0..d {
        let slot = blocks.g3.submatrix(&[j], &[j]);
        // P = -conj(v)^{-1} v for the 1x1 slot.
        let p_samples: Vec<DMatrix<C64>> = fit_grid
            .points()
            .iter()
            .map(|&z| {
                let v = slot.eval(z)[(0, 0)];
                if v.norm() == 0.0 {
                    return Err(Error::InvalidArgument("G3 slot vanishes on the grid".into()));
                }
                Ok(DMatrix::from_element(1, 1, -(v / v.conj())))
            })
            .collect::<Result<_>>()?;
        let p = MatrixPoly::fit(&p_samples, &fit_grid, 4)?;
        let factors = birkhoff_factor_2x2(&p)?;
        indices.extend(factors.indices);
    }

    let maslov = indices.iter().sum();
    Ok(IndexData { partial_indices: indices, maslov })
}

/// Applies the linearized operator f -> 2 Re[conj(G) f] to stacked samples
/// given in the reordered (g, h, h~, g~) convention, one vector per grid
/// point. Returns the real (2n+2d) x M image.
pub fn apply_to_samples(g: &BoundaryMatrix, values: &[DVector<C64>]) -> Result<DMatrix<f64>> {
    if values.len() != g.grid().len() {
        return Err(Error::InvalidArgument("one value vector per grid point required".into()));
    }
    let mut out = DMatrix::zeros(g.size(), values.len());
    for (i, v) in values.iter().enumerate() {
        let gv = g.sample(i).map(|c| c.conj()) * v;
        for r in 0..g.size() {
            out[(r, i)] = 2.0 * gv[r].re;
        }
    }
    Ok(out)
}

/// Applies the linearized operator to a lifted disc.
pub fn apply_to_lift(g: &BoundaryMatrix, lift: &LiftedDisc) -> Result<DMatrix<f64>> {
    let (n, d) = g.dims().ok_or_else(|| {
        Error::InvalidArgument("boundary matrix carries no (n, d) split".into())
    })?;
    if lift.n() != n || lift.d() != d {
        return Err(Error::InvalidArgument("lift dimensions do not match".into()));
    }
    let values: Vec<DVector<C64>> = (0..g.grid().len())
        .map(|i| reorder_values(&lift.eval_stacked(g.grid().point(i)), n, d))
        .collect();
    apply_to_samples(g, &values)
}

/// A kernel basis of the linearized operator.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub basis: Vec<LiftedDisc>,
    pub dim: usize,
    /// Ratio across the singular-value gap; infinite for the explicit basis.
    pub gap_ratio: f64,
    pub sigma_max: f64,
    /// Trailing singular values around the gap, descending.
    pub smallest_singular_values: Vec<f64>,
}

/// Discrete kernel of f -> 2 Re[conj(G) f] on truncated coefficient space.
///
/// In constrained mode the unknowns are the cofactor coefficients of
/// (1 - zeta)-factored discs of degree < n_f; unconstrained, plain
/// coefficients of degree <= n_f. The null space is extracted by SVD with
/// gap detection (ratio >= 1e3 between retained and discarded values).
pub fn numeric_kernel(g: &BoundaryMatrix, constrained: bool, n_f: usize) -> Result<KernelBasis> {
    let (n, d) = g.dims().ok_or_else(|| {
        Error::InvalidArgument("numeric_kernel needs a boundary matrix with (n, d) dims".into())
    })?;
    let size = g.size();
    let m = g.grid().len();
    if n_f < 3 || m < 2 * (n_f + 3) {
        return Err(Error::InvalidArgument(format!(
            "truncation {n_f} and grid {m} violate the Nyquist margin"
        )));
    }
    let ncoef = if constrained { n_f } else { n_f + 1 };
    let cols = size * ncoef * 2;
    let rows = m * size;

    // Power tables per grid point.
    let pows: Vec<Vec<C64>> = (0..m)
        .map(|i| {
            let z = g.grid().point(i);
            let mut p = Vec::with_capacity(n_f + 2);
            let mut acc = C64::new(1.0, 0.0);
            for _ in 0..=(n_f + 1) {
                p.push(acc);
                acc *= z;
            }
            p
        })
        .collect();
    let basis_fn = |i: usize, q: usize| -> C64 {
        if constrained {
            pows[i][q] - pows[i][q + 1]
        } else {
            pows[i][q]
        }
    };

    let mat = faer::Mat::from_fn(rows, cols, |r, c| {
        let (i, rho) = (r / size, r % size);
        let (p, rest) = (c / (ncoef * 2), c % (ncoef * 2));
        let (q, part) = (rest / 2, rest % 2);
        let gval = g.sample(i)[(rho, p)].conj() * basis_fn(i, q);
        if part == 0 {
            2.0 * gval.re
        } else {
            -2.0 * gval.im
        }
    });

    let ns = linalg::nullspace(&mat, 1e3, 1e-8)?;
    let dim = ns.basis.len();
    let grid_m = g.grid().len();

    let basis = ns
        .basis
        .iter()
        .map(|vec| {
            // Reordered component p: 0..d = g, d..d+n = h, d+n..d+2n = h~, rest g~.
            let coeff = |p: usize, q: usize| -> C64 {
                let base = (p * ncoef + q) * 2;
                C64::new(vec[base], vec[base + 1])
            };
            let make = |comps: std::ops::Range<usize>| -> Result<AnalyticDisc> {
                let coeffs = comps
                    .map(|p| (0..ncoef).map(|q| coeff(p, q)).collect())
                    .collect();
                AnalyticDisc::new(coeffs, grid_m)
            };
            let gdisc = make(0..d)?;
            let hdisc = make(d..d + n)?;
            let htdisc = make(d + n..d + 2 * n)?;
            let gtdisc = make(d + 2 * n..2 * n + 2 * d)?;
            if constrained {
                LiftedDisc::new(
                    FactoredDisc::new(hdisc).realize(),
                    FactoredDisc::new(gdisc).realize(),
                    FactoredDisc::new(htdisc).realize(),
                    FactoredDisc::new(gtdisc).realize(),
                )
            } else {
                LiftedDisc::new(hdisc, gdisc, htdisc, gtdisc)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let sigma_max = ns.singular_values.first().copied().unwrap_or(0.0);
    let tail_start = ns.singular_values.len().saturating_sub(dim + 4);
    Ok(KernelBasis {
        basis,
        dim,
        gap_ratio: ns.gap_ratio,
        sigma_max,
        smallest_singular_values: ns.singular_values[tail_start..].to_vec(),
    })
}

/// The matrix D_2 with entries (k, j) = V^T conj((A_j)_k) (equal to the
/// witness matrix [A_1 V | ... | A_d V] for Hermitian pencils), its adjoint
/// D_1, and the Gram matrix D_1 D_2.
#[derive(Debug, Clone)]
pub struct GramReport {
    pub d1: DMatrix<C64>,
    pub d2: DMatrix<C64>,
    pub gram: DMatrix<C64>,
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

pub fn gram_d(pencil: &HermitianPencil, v: &[C64]) -> Result<GramReport> {
    let (n, d) = (pencil.n(), pencil.d());
    if v.len() != n {
        return Err(Error::InvalidArgument("witness must have n entries".into()));
    }
    let d2 = DMatrix::from_fn(n, d, |k, j| {
        let mut s = C64::new(0.0, 0.0);
        for m in 0..n {
            s += v[m] * pencil.matrix(j)[(m, k)].conj();
        }
        s
    });
    let d1 = d2.adjoint();
    let gram = &d1 * &d2;
    let svals = linalg::complex_singular_values(&d2);
    let smax = svals.first().copied().unwrap_or(0.0);
    let smin = if svals.len() >= d { svals[d - 1] } else { 0.0 };
    let positive_definite = d <= n && smin > crate::geometry::RANK_REL_TOL * smax.max(f64::MIN_POSITIVE);
    Ok(GramReport {
        d1,
        d2,
        gram,
        positive_definite,
        min_eigenvalue: smin * smin,
        max_eigenvalue: smax * smax,
    })
}

/// The closed-form constrained kernel basis at a quadric base disc: for unit
/// parameters among (Re a_j, Im a_j, y_k, y~_k) the element
///   g~ = a - conj(a) zeta,
///   h  = A^{-1} h_flat,  h_flat = 2 D_2 Re(a) + (y~ + i y)/2 - 2 D_2 conj(a) zeta,
///   h~ = -2 conj(D_2) Re(a) + (y~ - i y)/2 + 2 conj(D_2) conj(a) zeta,
///   g  = -4 Re(conj(B_1) X) + 2 conj(B_1) Y - 2 conj(B_1) Y zeta,
/// all realized in (1 - zeta)-factored form, with X + Y zeta the cofactor of
/// h and B_1 the d x n matrix with entries -(A_j V)_k.
pub fn explicit_kernel_basis(
    pencil: &HermitianPencil,
    v: &[C64],
    c: &[f64],
    grid_m: usize,
) -> Result<KernelBasis> {
    let (n, d) = (pencil.n(), pencil.d());
    if v.len() != n || c.len() != d {
        return Err(Error::InvalidArgument("parameter dimensions must be (n, d)".into()));
    }
    let a_comb = pencil.combination(c)?;
    let a_lu = a_comb.clone().lu();
    if a_lu.determinant().norm() <= 1e-12 {
        return Err(Error::InvalidArgument("sum_j c_j A_j is singular".into()));
    }
    let gram = gram_d(pencil, v)?;
    let d2 = gram.d2.clone();

    let mut basis = Vec::with_capacity(2 * n + 2 * d);
    let zero_c = C64::new(0.0, 0.0);
    for idx in 0..(2 * n + 2 * d) {
        let mut a = vec![zero_c; d];
        let mut y = vec![0.0; n];
        let mut yt = vec![0.0; n];
        if idx < d {
            a[idx] = C64::new(1.0, 0.0);
        } else if idx < 2 * d {
            a[idx - d] = C64::new(0.0, 1.0);
        } else if idx < 2 * d + n {
            y[idx - 2 * d] = 1.0;
        } else {
            yt[idx - 2 * d - n] = 1.0;
        }

        let re_a = DVector::from_fn(d, |j, _| C64::new(a[j].re, 0.0));
        let conj_a = DVector::from_fn(d, |j, _| a[j].conj());
        let mix = DVector::from_fn(n, |k, _| C64::new(0.5 * yt[k], 0.5 * y[k]));
        let mix_t = DVector::from_fn(n, |k, _| C64::new(0.5 * yt[k], -0.5 * y[k]));

        let h_flat0 = &d2 * &re_a * C64::new(2.0, 0.0) + &mix;
        let h_flat1 = -(&d2 * &conj_a) * C64::new(2.0, 0.0);
        let x = a_lu.solve(&h_flat0).expect("A invertible");
        let yv = a_lu.solve(&h_flat1).expect("A invertible");

        let d2c = d2.map(|z| z.conj());
        let ht0 = -(&d2c * &re_a) * C64::new(2.0, 0.0) + &mix_t;
        let ht1 = (&d2c * &conj_a) * C64::new(2.0, 0.0);

        // conj(B_1) = -conj(D_2)^T acting on C^n.
        let b1_bar = -d2c.transpose();
        let bx = &b1_bar * &x;
        let by = &b1_bar * &yv;
        let g0 = DVector::from_fn(d, |j, _| C64::new(-4.0 * bx[j].re, 0.0) + 2.0 * by[j]);
        let g1 = DVector::from_fn(d, |j, _| -2.0 * by[j]);

        let h_cof = AnalyticDisc::new((0..n).map(|k| vec![x[k], yv[k]]).collect(), grid_m)?;
        let g_cof = AnalyticDisc::new((0..d).map(|j| vec![g0[j], g1[j]]).collect(), grid_m)?;
        let ht_cof = AnalyticDisc::new((0..n).map(|k| vec![ht0[k], ht1[k]]).collect(), grid_m)?;
        let gt_cof = AnalyticDisc::new((0..d).map(|j| vec![a[j], -a[j].conj()]).collect(), grid_m)?;

        basis.push(LiftedDisc::new(
            FactoredDisc::new(h_cof).realize(),
            FactoredDisc::new(g_cof).realize(),
            FactoredDisc::new(ht_cof).realize(),
            FactoredDisc::new(gt_cof).realize(),
        )?);
    }

    Ok(KernelBasis {
        dim: basis.len(),
        basis,
        gap_ratio: f64::INFINITY,
        sigma_max: 0.0,
        smallest_singular_values: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conormal::{build_initial_lift, build_quadric_lift};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pencil_1x1() -> HermitianPencil {
        HermitianPencil::new(vec![DMatrix::from_element(1, 1, c(1.0, 0.0))]).unwrap()
    }

    fn random_pencil(rng: &mut ChaCha8Rng, n: usize, d: usize) -> HermitianPencil {
        let mats = (0..d)
            .map(|_| {
                let b = DMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                (&b + b.adjoint()) * c(0.5, 0.0)
            })
            .collect();
        HermitianPencil::new(mats).unwrap()
    }

    /// Random pencil with verified (f) and (t) witnesses.
    fn random_admissible(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
    ) -> (HermitianPencil, Vec<C64>, Vec<f64>) {
        loop {
            let pencil = random_pencil(rng, n, d);
            let Some(v) = crate::geometry::find_full_witness(&pencil, 16, rng.gen()) else {
                continue;
            };
            let Some(cw) = crate::geometry::find_invertible_combination(&pencil, 16, rng.gen())
            else {
                continue;
            };
            return (pencil, v, cw);
        }
    }

    #[test]
    fn assembled_g_matches_hand_matrix_1x1() {
        let pencil = pencil_1x1();
        let def = DefiningFunction::quadric(pencil.clone());
        let base = build_initial_lift(&pencil, &[c(1.0, 0.0)], &[1.0], 64).unwrap().realize();
        let g = assemble_g(&def, &base, &[1.0], 64).unwrap();
        let i1 = c(0.0, 1.0);
        for (idx, &z) in g.grid().points().iter().enumerate() {
            let omz = c(1.0, 0.0) - z;
            let expected = DMatrix::from_row_slice(
                4,
                4,
                &[
                    c(0.5, 0.0), -omz, c(0.0, 0.0), c(0.0, 0.0),
                    c(0.0, 0.0), z, c(1.0, 0.0), 2.0 * omz,
                    c(0.0, 0.0), i1 * z, -i1, -2.0 * i1 * omz,
                    c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), -i1 * z,
                ],
            );
            let diff = (g.sample(idx) - expected).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "sample {idx} differs by {diff}");
        }
    }

    #[test]
    fn structured_form_resamples_to_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (pencil, v, cw) = random_admissible(&mut rng, 2, 2);
        let def = DefiningFunction::quadric(pencil.clone());
        let base = build_initial_lift(&pencil, &v, &cw, 64).unwrap().realize();
        let g = assemble_g(&def, &base, &cw, 64).unwrap();
        let blocks = g.structured().expect("quadric assembly is structured");
        for (i, &z) in g.grid().points().iter().enumerate() {
            let diff =
                (blocks.eval(z) - g.sample(i)).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "structured mismatch {diff} at point {i}");
        }
        // B vanishes at zeta = 1 for the constrained base disc.
        assert!(blocks.b.eval(c(1.0, 0.0)).iter().all(|x| x.norm() < 1e-13));
    }

    #[test]
    fn g2_determinant_identity() {
        // det G_2(zeta) = (-2i zeta)^n det(A^T) for the block built from
        // g~ = (zeta/2) c; check at n = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (pencil, v, cw) = random_admissible(&mut rng, 1, 1);
        let def = DefiningFunction::quadric(pencil.clone());
        let base = build_initial_lift(&pencil, &v, &cw, 64).unwrap().realize();
        let g = assemble_g(&def, &base, &cw, 64).unwrap();
        let blocks = g.structured().unwrap();
        let at = pencil.combination(&cw).unwrap()[(0, 0)];
        for &z in g.grid().points().iter().take(8) {
            let det = blocks.g2.eval(z).lu().determinant();
            let expected = -2.0 * c(0.0, 1.0) * z * at;
            assert_abs_diff_eq!((det - expected).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn maslov_of_monomial_diagonal() {
        // det(-conj(G)^{-1} G) = zeta^2 for G = diag(zeta, 1).
        let z0 = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        let poly = MatrixPoly::new(vec![
            DMatrix::from_row_slice(2, 2, &[z0, z0, z0, o]),
            DMatrix::from_row_slice(2, 2, &[o, z0, z0, z0]),
        ])
        .unwrap();
        let g = BoundaryMatrix::from_poly(poly, 64).unwrap();
        assert_eq!(maslov_index(&g).unwrap(), 2);
    }

    #[test]
    fn maslov_of_r_block_is_two() {
        // -conj(R)^{-1} R = P = -[[0, zeta], [zeta, 0]], whose determinant
        // -zeta^2 winds twice.
        let z0 = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        let i1 = c(0.0, 1.0);
        let r = MatrixPoly::new(vec![
            DMatrix::from_row_slice(2, 2, &[z0, o, z0, -i1]),
            DMatrix::from_row_slice(2, 2, &[o, z0, i1, z0]),
        ])
        .unwrap();
        let g = BoundaryMatrix::from_poly(r.clone(), 64).unwrap();
        assert_eq!(maslov_index(&g).unwrap(), 2);
        // The symbol P itself also winds twice.
        let p = MatrixPoly::new(vec![
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[z0, -o, -o, z0]),
        ])
        .unwrap();
        assert_eq!(symbol_winding(&p, 64).unwrap(), 2);
    }

    #[test]
    fn maslov_of_quadric_g_is_2n_plus_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for &(n, d) in &[(1usize, 1usize), (2, 1), (2, 2), (3, 2)] {
            let (pencil, v, cw) = random_admissible(&mut rng, n, d);
            let def = DefiningFunction::quadric(pencil.clone());
            let base = build_initial_lift(&pencil, &v, &cw, 128).unwrap().realize();
            let g = assemble_g(&def, &base, &cw, 128).unwrap();
            assert_eq!(maslov_index(&g).unwrap(), 2 * (n as i64) + 2 * (d as i64));
        }
    }

    #[test]
    fn maslov_invariant_under_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (pencil, v, cw) = random_admissible(&mut rng, 2, 1);
        let def = DefiningFunction::quadric(pencil.clone());
        let base = build_initial_lift(&pencil, &v, &cw, 64).unwrap().realize();
        let g = assemble_g(&def, &base, &cw, 64).unwrap();
        let reference = maslov_index(&g).unwrap();

        let size = g.size();
        // Random constant right factor, kept well conditioned.
        let x = DMatrix::from_fn(size, size, |i, j| {
            if i == j { c(1.0, 0.0) } else { c(0.1 * rng.gen_range(-1.0..1.0), 0.1 * rng.gen_range(-1.0..1.0)) }
        });
        let gx = g.right_multiplied(&x).unwrap();
        assert_eq!(maslov_index(&gx).unwrap(), reference);

        let mut perm: Vec<usize> = (0..size).collect();
        perm.swap(0, size - 1);
        perm.swap(1, 2);
        let gp = g.row_permuted(&perm).unwrap();
        assert_eq!(maslov_index(&gp).unwrap(), reference);
    }

    #[test]
    fn partial_indices_of_quadric_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for &(n, d) in &[(1usize, 1usize), (2, 2)] {
            let (pencil, v, cw) = random_admissible(&mut rng, n, d);
            let def = DefiningFunction::quadric(pencil.clone());
            let base = build_initial_lift(&pencil, &v, &cw, 64).unwrap().realize();
            let g = assemble_g(&def, &base, &cw, 64).unwrap();
            let data = partial_indices_structured(&g).unwrap();
            let mut expected = vec![0i64; d];
            expected.extend(vec![1i64; 2 * n]);
            expected.extend(vec![2i64; d]);
            assert_eq!(data.partial_indices, expected);
            assert_eq!(data.maslov, maslov_index(&g).unwrap());
        }
    }

    #[test]
    fn partial_indices_require_structure() {
        let g = BoundaryMatrix::from_poly(
            MatrixPoly::constant(DMatrix::identity(2, 2)),
            64,
        )
        .unwrap();
        assert!(matches!(partial_indices_structured(&g), Err(Error::StructuredFormRequired)));
    }

    #[test]
    fn birkhoff_factorization_examples() {
        let z0 = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        // P = -[[0, zeta], [zeta, 0]] factors with constant left factor
        // [[0, -1], [-1, 0]] and indices (1, 1).
        let p = MatrixPoly::new(vec![
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[z0, -o, -o, z0]),
        ])
        .unwrap();
        let f = birkhoff_factor_2x2(&p).unwrap();
        assert_eq!(f.indices, vec![1, 1]);
        assert_abs_diff_eq!((f.b_plus[(0, 1)] + o).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((f.b_plus[(1, 0)] + o).norm(), 0.0, epsilon = 1e-14);
        assert!((&f.b_minus - DMatrix::<C64>::identity(2, 2)).iter().all(|x| x.norm() < 1e-14));

        let id = MatrixPoly::constant(DMatrix::identity(2, 2));
        let f = birkhoff_factor_2x2(&id).unwrap();
        assert_eq!(f.indices, vec![0, 0]);
        assert!((&f.b_plus - DMatrix::<C64>::identity(2, 2)).iter().all(|x| x.norm() < 1e-14));

        // Negating P negates the left factor, indices unchanged.
        let minus_p = MatrixPoly::new(vec![
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[z0, o, o, z0]),
        ])
        .unwrap();
        let f = birkhoff_factor_2x2(&minus_p).unwrap();
        assert_eq!(f.indices, vec![1, 1]);
        assert_abs_diff_eq!((f.b_plus[(0, 1)] - o).norm(), 0.0, epsilon = 1e-14);

        // A genuinely mixed block is rejected.
        let bad = MatrixPoly::new(vec![
            DMatrix::from_row_slice(2, 2, &[o, o, z0, o]),
            DMatrix::from_row_slice(2, 2, &[o, z0, z0, z0]),
        ])
        .unwrap();
        assert!(birkhoff_factor_2x2(&bad).is_err());
    }

    #[test]
    fn linear_operator_basics() {
        let g = BoundaryMatrix::from_poly(MatrixPoly::constant(DMatrix::identity(4, 4)), 64)
            .unwrap();
        let v = [c(0.3, 0.7), c(-1.0, 0.5), c(0.0, -2.0), c(1.0, 1.0)];
        let samples: Vec<DVector<C64>> =
            (0..64).map(|_| DVector::from_row_slice(&v)).collect();
        let out = apply_to_samples(&g, &samples).unwrap();
        for i in 0..64 {
            for r in 0..4 {
                assert_abs_diff_eq!(out[(r, i)], 2.0 * v[r].re, epsilon = 1e-14);
            }
        }
        // Zero in, zero out.
        let zeros: Vec<DVector<C64>> = (0..64).map(|_| DVector::zeros(4)).collect();
        let out = apply_to_samples(&g, &zeros).unwrap();
        assert!(out.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn explicit_kernel_basis_y_direction_1x1() {
        let pencil = pencil_1x1();
        let basis = explicit_kernel_basis(&pencil, &[c(1.0, 0.0)], &[1.0], 64).unwrap();
        assert_eq!(basis.dim, 4);
        // Order: Re a, Im a, y, y~; the y-direction is index 2.
        let e = &basis.basis[2];
        // h = (1 - zeta) i/2, g = 0, h~ = -(1 - zeta) i/2, g~ = 0.
        assert_abs_diff_eq!((e.h.coefficient(0, 0) - c(0.0, 0.5)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((e.h.coefficient(0, 1) + c(0.0, 0.5)).norm(), 0.0, epsilon = 1e-14);
        assert!(e.g.coefficients()[0].iter().all(|x| x.norm() < 1e-14));
        assert_abs_diff_eq!((e.ht.coefficient(0, 0) + c(0.0, 0.5)).norm(), 0.0, epsilon = 1e-14);
        assert!(e.gt.coefficients()[0].iter().all(|x| x.norm() < 1e-14));
    }

    #[test]
    fn explicit_kernel_annihilates_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for &(n, d) in &[(1usize, 1usize), (2, 1), (2, 2)] {
            let (pencil, v, cw) = random_admissible(&mut rng, n, d);
            let def = DefiningFunction::quadric(pencil.clone());
            let base = build_initial_lift(&pencil, &v, &cw, 64).unwrap().realize();
            let g = assemble_g(&def, &base, &cw, 64).unwrap();
            let basis = explicit_kernel_basis(&pencil, &v, &cw, 64).unwrap();
            assert_eq!(basis.dim, 2 * n + 2 * d);
            for e in &basis.basis {
                let image = apply_to_lift(&g, e).unwrap();
                let sup = image.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
                assert!(sup < 1e-10, "kernel residual {sup} for (n, d) = ({n}, {d})");
            }
        }
    }

    #[test]
    fn numeric_kernel_dimensions_and_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let (pencil, v, cw) = random_admissible(&mut rng, 1, 1);
        let def = DefiningFunction::quadric(pencil.clone());
        let base = build_initial_lift(&pencil, &v, &cw, 64).unwrap().realize();
        let g = assemble_g(&def, &base, &cw, 64).unwrap();

        let unconstrained = numeric_kernel(&g, false, 12).unwrap();
        assert_eq!(unconstrained.dim, 8, "kappa + 2n + 2d");
        assert!(unconstrained.gap_ratio > 1e3);

        let constrained = numeric_kernel(&g, true, 12).unwrap();
        assert_eq!(constrained.dim, 4, "kappa");
        assert!(constrained.gap_ratio > 1e3);

        // Spans agree with the closed-form basis.
        let explicit = explicit_kernel_basis(&pencil, &v, &cw, 64).unwrap();
        let na: Vec<Vec<f64>> = constrained.basis.iter().map(|b| b.flatten_real(13)).collect();
        let nb: Vec<Vec<f64>> = explicit.basis.iter().map(|b| b.flatten_real(13)).collect();
        let angles = linalg::principal_angles(&na, &nb).unwrap();
        assert!(angles.iter().all(|t| *t < 1e-6), "principal angles {angles:?}");

        // Every constrained element vanishes at zeta = 1.
        for b in &constrained.basis {
            let at_one = b.eval_stacked(c(1.0, 0.0));
            assert!(at_one.iter().all(|x| x.norm() < 1e-10));
        }
    }

    #[test]
    fn gram_d_examples() {
        // d = 1, A = I_n, V = e_1: gram = (1).
        let id = HermitianPencil::new(vec![DMatrix::identity(3, 3)]).unwrap();
        let v = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let rep = gram_d(&id, &v).unwrap();
        assert!(rep.positive_definite);
        assert_abs_diff_eq!((rep.gram[(0, 0)] - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-14);

        // The C^8 example is singular for every V.
        let c8 = HermitianPencil::example_c8();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..4 {
            let v: Vec<C64> =
                (0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let rep = gram_d(&c8, &v).unwrap();
            assert!(!rep.positive_definite);
        }

        // An (f)-witness makes the gram positive definite, and D_2 equals
        // the witness matrix columns A_j V.
        let (pencil, v, _) = random_admissible(&mut rng, 3, 2);
        let rep = gram_d(&pencil, &v).unwrap();
        assert!(rep.positive_definite);
        let wm = pencil.witness_matrix(&v).unwrap();
        let diff = (&rep.d2 - &wm).iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "D_2 differs from [A_1 V | ... | A_d V] by {diff}");
    }
}
