//! Characteristic-coordinate lattice for the kernel integral equation.
//!
//! With `xi = x + y`, `eta = x - y` and `G(xi, eta) = k((xi+eta)/2, (xi-eta)/2)`
//! the kernel solves
//!
//! ```text
//! G(xi, eta) = -1/4 int_eta^xi lam(s/2) ds
//!            + 1/4 int_eta^xi int_0^eta lam((sig - s)/2) G(sig, s) ds dsig
//! ```
//!
//! Nodes are `(xi, eta) = (a h, b h)` with `0 <= b <= a` and `a + b <= 2N`,
//! `h = 1/N`. Nodes with `a + b` even coincide with the `(x, y)` grid; the
//! others sit at half-grid `x`. Both integrals use the composite trapezoid
//! rule on this lattice and `lam` at half-grid points is linearly interpolated.

use crate::grid::{cumulative_trapezoid, ScalarField1D, TriField};

#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    cells: usize,
    offsets: Vec<usize>,
    pub values: Vec<f64>,
}

impl Lattice {
    pub fn zeros(cells: usize) -> Self {
        let mut offsets = Vec::with_capacity(2 * cells + 2);
        let mut acc = 0;
        for a in 0..=2 * cells {
            offsets.push(acc);
            acc += a.min(2 * cells - a) + 1;
        }
        offsets.push(acc);
        Self {
            cells,
            offsets,
            values: vec![0.0; acc],
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn b_max(&self, a: usize) -> usize {
        a.min(2 * self.cells - a)
    }

    #[inline]
    pub fn idx(&self, a: usize, b: usize) -> usize {
        debug_assert!(b <= self.b_max(a));
        self.offsets[a] + b
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[self.idx(a, b)]
    }

    pub fn to_tri(&self, tri: crate::grid::TriGrid) -> TriField {
        let mut k = TriField::zeros(tri);
        for i in 0..tri.n_points() {
            for j in 0..=i {
                k.set(i, j, self.get(i + j, i - j));
            }
        }
        k
    }

    pub fn sup_diff(&self, other: &Lattice) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `lam(d h / 2)` for `d = 0..=2N`; odd `d` is the midpoint average.
pub(crate) fn half_grid_samples(lambda: &ScalarField1D) -> Vec<f64> {
    let v = lambda.values();
    let cells = v.len() - 1;
    (0..=2 * cells)
        .map(|d| {
            if d % 2 == 0 {
                v[d / 2]
            } else {
                0.5 * (v[d / 2] + v[d / 2 + 1])
            }
        })
        .collect()
}

/// The inhomogeneous term `-1/4 int_eta^xi lam(s/2) ds` on every lattice node.
///
/// On the `eta = 0` edge at grid nodes this is written directly as
/// `-1/2 * trapezoid(lam on [0, x_i])`, the `k(x, x)` boundary condition.
pub(crate) fn boundary_term(lambda: &ScalarField1D, cells: usize) -> Lattice {
    let h = 1.0 / cells as f64;
    let half = half_grid_samples(lambda);
    let mut prefix = Vec::with_capacity(half.len());
    let mut acc = 0.0;
    for v in &half {
        acc += v;
        prefix.push(acc);
    }
    let diag = cumulative_trapezoid(lambda.values(), h);

    let mut out = Lattice::zeros(cells);
    for a in 0..=2 * cells {
        for b in 0..=out.b_max(a) {
            let v = if b == 0 && a % 2 == 0 {
                -0.5 * diag[a / 2]
            } else if a == b {
                0.0
            } else {
                let below = if b == 0 { 0.0 } else { prefix[b - 1] };
                let trap = (prefix[a] - below) - 0.5 * (half[a] + half[b]);
                -0.25 * h * trap
            };
            let idx = out.idx(a, b);
            out.values[idx] = v;
        }
    }
    out
}

/// `h^2 * sum_sig w_sig sum_s w_s coef(sig - s) G(sig, s) / 4`: the double
/// integral of the kernel equation for every lattice node at once.
///
/// Column trapezoids in `s` followed by running sums in `sig` make this
/// O(nodes) per application.
pub(crate) fn volterra_apply(half_coef: &[f64], field: &Lattice) -> Lattice {
    let cells = field.cells();
    let h = 1.0 / cells as f64;
    let mut col = Lattice::zeros(cells);

    // col(sig, b) = sum_{s=0..b} w_s f(sig, s), trapezoid weights over [0, b].
    for sig in 0..=2 * cells {
        let bm = field.b_max(sig);
        let base = field.idx(sig, 0);
        let f0 = 0.25 * half_coef[sig] * field.values[base];
        let mut prefix = f0;
        col.values[base] = 0.0;
        for b in 1..=bm {
            let f = 0.25 * half_coef[sig - b] * field.values[base + b];
            prefix += f;
            col.values[base + b] = prefix - 0.5 * (f0 + f);
        }
    }

    // out(a, b) = h^2 * trapezoid over sig in [b, a] of col(sig, b).
    let mut out = Lattice::zeros(cells);
    for b in 0..=cells {
        let first = col.get(b, b);
        let mut running = first;
        for a in (b + 1)..=(2 * cells - b) {
            let c = col.get(a, b);
            running += c;
            let idx = out.idx(a, b);
            out.values[idx] = h * h * (running - 0.5 * (first + c));
        }
    }
    out
}
