//! Periodic-box geometry and the Fourier mode lattice.
//!
//! A [`GridSpec`] fixes the collocation grid, the signed integer mode
//! indices per axis, the physical wavenumbers `k_j = q_j * 2*pi/l_j`, and
//! the sharp dealiasing mask. All spectral data in this crate is indexed
//! `[i1][i2][i3]` with the third axis contiguous.

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Axis selector for the three spatial directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    X1,
    X2,
    X3,
}

impl Dir {
    pub const ALL: [Dir; 3] = [Dir::X1, Dir::X2, Dir::X3];

    pub fn index(self) -> usize {
        match self {
            Dir::X1 => 0,
            Dir::X2 => 1,
            Dir::X3 => 2,
        }
    }

    pub fn from_index(i: usize) -> Dir {
        match i {
            0 => Dir::X1,
            1 => Dir::X2,
            2 => Dir::X3,
            _ => panic!("axis index out of range: {i}"),
        }
    }
}

/// Geometry and resolution of the periodic box, plus the dealias rule.
///
/// Mode counts must be even and at least 4. The fundamental wavenumber on
/// axis `j` is `2*pi/l_j`. The mask zeroes exactly the modes with
/// `|q_j| > dealias_fraction * n_j/2` on any axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n1: usize,
    n2: usize,
    n3: usize,
    l1: f64,
    l2: f64,
    l3: f64,
    dealias_fraction: f64,
}

impl GridSpec {
    pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

    pub fn new(
        n: [usize; 3],
        l: [f64; 3],
        dealias_fraction: f64,
    ) -> Result<GridSpec, GridError> {
        for (axis, &nj) in n.iter().enumerate() {
            if nj < 4 || nj % 2 != 0 {
                return Err(GridError::BadModeCount { axis, n: nj });
            }
        }
        for (axis, &lj) in l.iter().enumerate() {
            if lj <= 0.0 || !lj.is_finite() {
                return Err(GridError::BadBoxLength { axis, l: lj });
            }
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(GridError::BadDealiasFraction(dealias_fraction));
        }
        Ok(GridSpec {
            n1: n[0],
            n2: n[1],
            n3: n[2],
            l1: l[0],
            l2: l[1],
            l3: l[2],
            dealias_fraction,
        })
    }

    /// Cubic box of edge `l` with `n` modes per axis and the 2/3 mask.
    pub fn cubic(n: usize, l: f64) -> Result<GridSpec, GridError> {
        GridSpec::new([n, n, n], [l, l, l], Self::DEFAULT_DEALIAS_FRACTION)
    }

    pub fn n(&self) -> [usize; 3] {
        [self.n1, self.n2, self.n3]
    }

    pub fn l(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn len(&self, axis: Dir) -> usize {
        self.n()[axis.index()]
    }

    pub fn n_total(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.n3)
    }

    pub fn volume(&self) -> f64 {
        self.l1 * self.l2 * self.l3
    }

    /// Volume of one collocation cell, the quadrature weight of the grid.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.n_total() as f64
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Grid spacing along `axis`.
    pub fn spacing(&self, axis: Dir) -> f64 {
        self.l()[axis.index()] / self.len(axis) as f64
    }

    /// Fundamental (smallest positive) wavenumber along `axis`.
    pub fn fundamental(&self, axis: Dir) -> f64 {
        2.0 * std::f64::consts::PI / self.l()[axis.index()]
    }

    /// Signed integer mode index for storage index `i` on `axis`:
    /// `0, 1, .., n/2, -(n/2 - 1), .., -1`.
    pub fn freq_index(&self, axis: Dir, i: usize) -> i64 {
        let n = self.len(axis);
        debug_assert!(i < n);
        if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Physical wavenumber for storage index `i` on `axis`.
    pub fn wavenumber(&self, axis: Dir, i: usize) -> f64 {
        self.freq_index(axis, i) as f64 * self.fundamental(axis)
    }

    /// The unmatched highest mode (`q = n/2`), which has no conjugate
    /// partner on an even grid.
    pub fn is_nyquist(&self, axis: Dir, i: usize) -> bool {
        i == self.len(axis) / 2
    }

    /// Whether storage index `i` on `axis` falls outside the kept band.
    pub fn axis_masked(&self, axis: Dir, i: usize) -> bool {
        let limit = self.dealias_fraction * self.len(axis) as f64 / 2.0;
        (self.freq_index(axis, i).unsigned_abs() as f64) > limit
    }

    /// Whether the mode at storage index `(i1, i2, i3)` is zeroed by the mask.
    pub fn is_masked(&self, i1: usize, i2: usize, i3: usize) -> bool {
        self.axis_masked(Dir::X1, i1)
            || self.axis_masked(Dir::X2, i2)
            || self.axis_masked(Dir::X3, i3)
    }

    /// Per-axis wavenumber table, indexed by storage index.
    pub fn wavenumbers(&self, axis: Dir) -> Vec<f64> {
        (0..self.len(axis)).map(|i| self.wavenumber(axis, i)).collect()
    }

    /// Per-axis mask table (`true` = keep), indexed by storage index.
    pub fn axis_keep(&self, axis: Dir) -> Vec<bool> {
        (0..self.len(axis)).map(|i| !self.axis_masked(axis, i)).collect()
    }

    /// Storage index of the conjugate partner `-q` on `axis`.
    pub fn conj_index(&self, axis: Dir, i: usize) -> usize {
        let n = self.len(axis);
        (n - i) % n
    }

    /// Physical coordinate of collocation point `i` on `axis`.
    pub fn coord(&self, axis: Dir, i: usize) -> f64 {
        i as f64 * self.spacing(axis)
    }

    /// Largest kept wavenumber magnitude over the full lattice.
    pub fn max_kept_wavenumber(&self) -> f64 {
        let mut k2 = 0.0;
        for axis in Dir::ALL {
            let mut kmax = 0.0f64;
            for i in 0..self.len(axis) {
                if !self.axis_masked(axis, i) {
                    kmax = kmax.max(self.wavenumber(axis, i).abs());
                }
            }
            k2 += kmax * kmax;
        }
        k2.sqrt()
    }
}
