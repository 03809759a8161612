//! Flat little-endian binary layout:
//!
//! ```text
//! "CUTOFFEN" | version u32 | kind u8 | dim u32 | n_paths u64 | n_times u64
//! | seed u64 | epsilon f64 | step f64 | flags u8 (1 = linear, 2 = skeleton)
//! | model_id (u32 length + UTF-8) | x0 | times | paths | linear? | skeleton?
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EnsembleKind, SimError, TrajectoryEnsemble};

const MAGIC: &[u8; 8] = b"CUTOFFEN";
const VERSION: u32 = 1;

fn put_f64s(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_ensemble(path: &Path, e: &TrajectoryEnsemble) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[e.kind.code()])?;
    w.write_all(&(e.dim as u32).to_le_bytes())?;
    w.write_all(&(e.n_paths as u64).to_le_bytes())?;
    w.write_all(&(e.n_times() as u64).to_le_bytes())?;
    w.write_all(&e.seed.to_le_bytes())?;
    w.write_all(&e.epsilon.to_le_bytes())?;
    w.write_all(&e.step.to_le_bytes())?;
    let flags = u8::from(e.linear.is_some()) | (u8::from(e.skeleton.is_some()) << 1);
    w.write_all(&[flags])?;
    w.write_all(&(e.model_id.len() as u32).to_le_bytes())?;
    w.write_all(e.model_id.as_bytes())?;
    put_f64s(&mut w, &e.x0)?;
    put_f64s(&mut w, &e.times)?;
    put_f64s(&mut w, &e.paths)?;
    if let Some(l) = &e.linear {
        put_f64s(&mut w, l)?;
    }
    if let Some(s) = &e.skeleton {
        put_f64s(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], SimError> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, SimError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, SimError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, SimError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SimError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_ensemble(path: &Path) -> Result<TrajectoryEnsemble, SimError> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    if &r.bytes::<8>()? != MAGIC {
        return Err(SimError::Io("not an ensemble file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SimError::Io(format!("unsupported ensemble version {version}")));
    }
    let [code] = r.bytes::<1>()?;
    let kind = EnsembleKind::from_code(code).ok_or_else(|| SimError::Io(format!("bad kind {code}")))?;
    let dim = r.u32()? as usize;
    let n_paths = r.u64()? as usize;
    let n_times = r.u64()? as usize;
    let seed = r.u64()?;
    let epsilon = r.f64()?;
    let step = r.f64()?;
    let [flags] = r.bytes::<1>()?;
    let id_len = r.u32()? as usize;
    let mut id = vec![0u8; id_len];
    r.0.read_exact(&mut id)?;
    let model_id = String::from_utf8(id).map_err(|e| SimError::Io(e.to_string()))?;
    let x0 = r.f64s(dim)?;
    let times = r.f64s(n_times)?;
    let body = n_paths * n_times * dim;
    let paths = r.f64s(body)?;
    let linear = if flags & 1 != 0 { Some(r.f64s(body)?) } else { None };
    let skeleton = if flags & 2 != 0 { Some(r.f64s(n_times * dim)?) } else { None };
    Ok(TrajectoryEnsemble {
        kind,
        times,
        dim,
        n_paths,
        epsilon,
        seed,
        step,
        x0,
        model_id,
        paths,
        linear,
        skeleton,
    })
}

/// Per-time sample mean and variance of each coordinate:
/// `t,mean_0,…,var_0,…`.
pub fn write_summary_csv(path: &Path, e: &TrajectoryEnsemble) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend((0..e.dim).map(|i| format!("mean_{i}")));
    header.extend((0..e.dim).map(|i| format!("var_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (t, (mean, var)) in e.times.iter().zip(e.marginal_moments()) {
        let mut row = vec![t.to_string()];
        row.extend(mean.iter().chain(&var).map(|v| v.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PotentialModel;
    use crate::sde_sim::{simulate_coupled_linearization, simulate_paths, TimeGrid};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = PotentialModel::ou_diagonal(vec![1.0, 2.0]).unwrap();
        let grid = TimeGrid::auto(&m, 0.1, &[1.0, 0.5], 1.0, 0.25).unwrap();
        for e in [
            simulate_paths(&m, 0.1, &[1.0, 0.5], &grid, 5, 2).unwrap(),
            simulate_coupled_linearization(&m, 0.1, &[1.0, 0.5], &grid, 5, 2)
                .unwrap()
                .with_model_id("ou:1,2"),
        ] {
            let p = dir.path().join("e.bin");
            write_ensemble(&p, &e).unwrap();
            assert_eq!(read_ensemble(&p).unwrap(), e);
        }
    }

    #[test]
    fn summary_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        let grid = TimeGrid::auto(&m, 0.1, &[1.0], 1.0, 0.5).unwrap();
        let e = simulate_paths(&m, 0.1, &[1.0], &grid, 10, 2).unwrap();
        let p = dir.path().join("s.csv");
        write_summary_csv(&p, &e).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,mean_0,var_0");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,1,"));
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"NOTANENSEMBLEFILE").unwrap();
        assert!(read_ensemble(&p).is_err());
    }
}
