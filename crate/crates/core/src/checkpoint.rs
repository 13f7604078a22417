//! Binary checkpoint format.
//!
//! Little-endian IEEE-754 layout:
//!
//! ```text
//! magic "MMP1"                              4 bytes
//! n1 n2 n3                                  3 x u32
//! l1 l2 l3                                  3 x f64
//! time                                      f64
//! mu nu gamma kappa chi                     5 x f64
//! nine coefficient arrays                   each n1*n2*n3 x (re f64, im f64)
//! ```
//!
//! Array order is `u1 u2 u3 B1 B2 B3 w1 w2 w3`, each in row-major index
//! order `[i1][i2][i3]` with `i3` fastest. Loading reconstructs the state
//! through the usual ingestion path, so fields are re-projected and
//! re-dealiased regardless of what the file claims.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;
use num_complex::Complex64;

use crate::dynamics::{PhysParams, State};
use crate::error::CheckpointError;
use crate::field::{SpectralScalarField, SpectralVectorField};
use crate::grid::GridSpec;

pub const MAGIC: &[u8; 4] = b"MMP1";

pub fn save_checkpoint(
    path: &Path,
    state: &State,
    params: &PhysParams,
) -> Result<(), CheckpointError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    let grid = state.grid();
    for n in grid.n() {
        out.write_u32::<LittleEndian>(n as u32)?;
    }
    for l in grid.l() {
        out.write_f64::<LittleEndian>(l)?;
    }
    out.write_f64::<LittleEndian>(state.t())?;
    for v in [params.mu, params.nu, params.gamma, params.kappa, params.chi] {
        out.write_f64::<LittleEndian>(v)?;
    }
    for field in state.fields() {
        for c in field.components() {
            for v in c.coeffs().iter() {
                out.write_f64::<LittleEndian>(v.re)?;
                out.write_f64::<LittleEndian>(v.im)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(
    path: &Path,
    dealias_fraction: f64,
) -> Result<(State, PhysParams), CheckpointError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(map_eof)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let mut n = [0usize; 3];
    for slot in &mut n {
        *slot = input.read_u32::<LittleEndian>().map_err(map_eof)? as usize;
    }
    let mut l = [0f64; 3];
    for slot in &mut l {
        *slot = input.read_f64::<LittleEndian>().map_err(map_eof)?;
    }
    let t = input.read_f64::<LittleEndian>().map_err(map_eof)?;
    let mut p = [0f64; 5];
    for slot in &mut p {
        *slot = input.read_f64::<LittleEndian>().map_err(map_eof)?;
    }
    let params = PhysParams::new_with_degenerate_override(p[0], p[1], p[2], p[3], p[4])
        .map_err(CheckpointError::BadParams)?;
    let grid = GridSpec::new(n, l, dealias_fraction)?;

    let mut fields = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut comps = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut data = Array3::zeros(grid.shape());
            for v in data.iter_mut() {
                let re = input.read_f64::<LittleEndian>().map_err(map_eof)?;
                let im = input.read_f64::<LittleEndian>().map_err(map_eof)?;
                *v = Complex64::new(re, im);
            }
            comps.push(
                SpectralScalarField::from_coeffs(&grid, data)
                    .expect("shape matches grid by construction"),
            );
        }
        fields.push(
            SpectralVectorField::from_components(comps.try_into().expect("three components"))
                .expect("components share one grid"),
        );
    }
    let mut it = fields.into_iter();
    let (u, b, w) = (
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    );
    let state = State::new(u, b, w, t).expect("grids match by construction");
    Ok((state, params))
}

fn map_eof(e: std::io::Error) -> CheckpointError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        CheckpointError::Truncated
    } else {
        CheckpointError::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{random_divfree_field, SpectrumShape};

    fn make_state() -> (State, PhysParams) {
        let grid = GridSpec::new(
            [8, 8, 4],
            [2.0 * std::f64::consts::PI, 3.0, 1.5],
            2.0 / 3.0,
        )
        .unwrap();
        let shape = SpectrumShape::default();
        let s = State::new(
            random_divfree_field(&grid, 1, shape, 0.4, false),
            random_divfree_field(&grid, 2, shape, 0.3, false),
            random_divfree_field(&grid, 3, shape, 0.2, false),
            1.25,
        )
        .unwrap();
        (s, PhysParams::new(1.0, 0.8, 1.1, 0.9, 0.5).unwrap())
    }

    #[test]
    fn round_trip_preserves_coefficients() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.mmp");
        let (state, params) = make_state();
        save_checkpoint(&path, &state, &params).unwrap();
        let (loaded, lp) = load_checkpoint(&path, 2.0 / 3.0).unwrap();
        assert_eq!(lp, params);
        assert_eq!(loaded.t(), state.t());
        // Ingestion re-projects, so agreement is to rounding rather than
        // bitwise on the projected components.
        for (fa, fb) in loaded.fields().into_iter().zip(state.fields()) {
            for (ca, cb) in fa.components().iter().zip(fb.components()) {
                let worst = ca
                    .coeffs()
                    .iter()
                    .zip(cb.coeffs().iter())
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
                assert!(worst <= 1e-15, "round trip moved coefficients by {worst}");
            }
        }
    }

    #[test]
    fn magic_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mmp");
        std::fs::write(&path, b"NOPE00000000").unwrap();
        match load_checkpoint(&path, 2.0 / 3.0) {
            Err(CheckpointError::BadMagic(m)) => assert_eq!(&m, b"NOPE"),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.mmp");
        let (state, params) = make_state();
        save_checkpoint(&path, &state, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path, 2.0 / 3.0),
            Err(CheckpointError::Truncated)
        ));
    }
}
