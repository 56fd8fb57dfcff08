//! Posterior draw storage: constrained values for reporting, raw
//! unconstrained values for bridge sampling, per-iteration diagnostics, and
//! two serializations — CSV for inspection and a compact binary layout
//! ("PHYD") for exact round-trips.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Per-iteration sampler diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawDiag {
    pub divergent: bool,
    pub energy: f64,
    pub depth: u32,
    pub step_size: f64,
}

/// Posterior draws, indexed [chain × iteration × parameter].
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    names: Vec<String>,
    n_chains: usize,
    n_iters: usize,
    dim: usize,
    constrained: Vec<f64>,
    unconstrained: Vec<f64>,
    diag: Vec<DrawDiag>,
}

impl Draws {
    pub(crate) fn new(names: Vec<String>, n_chains: usize, n_iters: usize, dim: usize) -> Self {
        let len = n_chains * n_iters * dim;
        Draws {
            names,
            n_chains,
            n_iters,
            dim,
            constrained: vec![0.0; len],
            unconstrained: vec![0.0; len],
            diag: vec![
                DrawDiag { divergent: false, energy: 0.0, depth: 0, step_size: 0.0 };
                n_chains * n_iters
            ],
        }
    }

    pub(crate) fn set(
        &mut self,
        chain: usize,
        iter: usize,
        constrained: &[f64],
        unconstrained: &[f64],
        diag: DrawDiag,
    ) {
        let at = (chain * self.n_iters + iter) * self.dim;
        self.constrained[at..at + self.dim].copy_from_slice(constrained);
        self.unconstrained[at..at + self.dim].copy_from_slice(unconstrained);
        self.diag[chain * self.n_iters + iter] = diag;
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_iters(&self) -> usize {
        self.n_iters
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One constrained draw (all parameters).
    pub fn row(&self, chain: usize, iter: usize) -> &[f64] {
        let at = (chain * self.n_iters + iter) * self.dim;
        &self.constrained[at..at + self.dim]
    }

    /// One unconstrained draw.
    pub fn unconstrained_row(&self, chain: usize, iter: usize) -> &[f64] {
        let at = (chain * self.n_iters + iter) * self.dim;
        &self.unconstrained[at..at + self.dim]
    }

    /// All draws of one parameter, chains concatenated in order.
    pub fn param_draws(&self, p: usize) -> Vec<f64> {
        (0..self.n_chains)
            .flat_map(|c| (0..self.n_iters).map(move |i| self.row(c, i)[p]))
            .collect()
    }

    /// Draws of one parameter within one chain.
    pub fn chain_param(&self, chain: usize, p: usize) -> Vec<f64> {
        (0..self.n_iters).map(|i| self.row(chain, i)[p]).collect()
    }

    /// Column index of a named parameter.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn diagnostics(&self) -> &[DrawDiag] {
        &self.diag
    }

    #[cfg(test)]
    pub(crate) fn constrained_slice(&self) -> &[f64] {
        &self.constrained
    }

    #[cfg(test)]
    pub(crate) fn unconstrained_slice(&self) -> &[f64] {
        &self.unconstrained
    }

    /// CSV export: one row per draw with chain/iteration labels, constrained
    /// parameter columns, and the diagnostic columns.
    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend(
            ["divergent", "energy", "depth", "step_size"].iter().map(|s| s.to_string()),
        );
        w.write_record(&header).map_err(csv_err)?;
        for c in 0..self.n_chains {
            for i in 0..self.n_iters {
                let mut rec = vec![c.to_string(), i.to_string()];
                rec.extend(self.row(c, i).iter().map(|v| format!("{v:.17e}")));
                let d = &self.diag[c * self.n_iters + i];
                rec.push(if d.divergent { "1" } else { "0" }.to_string());
                rec.push(format!("{:.17e}", d.energy));
                rec.push(d.depth.to_string());
                rec.push(format!("{:.17e}", d.step_size));
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary export. Layout (little-endian): magic "PHYD", version u32,
    /// n_chains u32, n_iters u32, dim u32, then per parameter a u32 length +
    /// UTF-8 name, then the constrained payload (chain-major f64), the
    /// unconstrained payload, and per-draw diagnostics
    /// (u8 divergent, f64 energy, u32 depth, f64 step_size).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"PHYD")?;
        f.write_all(&1u32.to_le_bytes())?;
        f.write_all(&(self.n_chains as u32).to_le_bytes())?;
        f.write_all(&(self.n_iters as u32).to_le_bytes())?;
        f.write_all(&(self.dim as u32).to_le_bytes())?;
        for name in &self.names {
            let b = name.as_bytes();
            f.write_all(&(b.len() as u32).to_le_bytes())?;
            f.write_all(b)?;
        }
        for v in &self.constrained {
            f.write_all(&v.to_le_bytes())?;
        }
        for v in &self.unconstrained {
            f.write_all(&v.to_le_bytes())?;
        }
        for d in &self.diag {
            f.write_all(&[u8::from(d.divergent)])?;
            f.write_all(&d.energy.to_le_bytes())?;
            f.write_all(&d.depth.to_le_bytes())?;
            f.write_all(&d.step_size.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Read a binary draws file written by `write_binary`.
    pub fn read_binary(path: &Path) -> Result<Draws> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != b"PHYD" {
            return Err(Error::parse(0, "not a draws file (bad magic)"));
        }
        let version = read_u32(&mut f)?;
        if version != 1 {
            return Err(Error::parse(4, format!("unsupported draws version {version}")));
        }
        let n_chains = read_u32(&mut f)? as usize;
        let n_iters = read_u32(&mut f)? as usize;
        let dim = read_u32(&mut f)? as usize;
        let mut names = Vec::with_capacity(dim);
        for _ in 0..dim {
            let len = read_u32(&mut f)? as usize;
            let mut buf = vec![0u8; len];
            f.read_exact(&mut buf)?;
            names.push(String::from_utf8(buf).map_err(|e| {
                Error::parse(0, format!("invalid parameter name encoding: {e}"))
            })?);
        }
        let len = n_chains * n_iters * dim;
        let mut constrained = Vec::with_capacity(len);
        for _ in 0..len {
            constrained.push(read_f64(&mut f)?);
        }
        let mut unconstrained = Vec::with_capacity(len);
        for _ in 0..len {
            unconstrained.push(read_f64(&mut f)?);
        }
        let mut diag = Vec::with_capacity(n_chains * n_iters);
        for _ in 0..n_chains * n_iters {
            let mut b = [0u8; 1];
            f.read_exact(&mut b)?;
            let energy = read_f64(&mut f)?;
            let depth = read_u32(&mut f)?;
            let step_size = read_f64(&mut f)?;
            diag.push(DrawDiag { divergent: b[0] != 0, energy, depth, step_size });
        }
        Ok(Draws { names, n_chains, n_iters, dim, constrained, unconstrained, diag })
    }
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::Io(io);
        }
        unreachable!("is_io_error guaranteed an io kind");
    }
    Error::validation(format!("csv write failed: {e}"))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_draws() -> Draws {
        let mut d = Draws::new(vec!["a".into(), "b".into()], 2, 3, 2);
        for c in 0..2 {
            for i in 0..3 {
                let v = [c as f64 + i as f64 * 0.1, -(c as f64) - i as f64];
                let u = [v[0] * 2.0, v[1] * 2.0];
                d.set(
                    c,
                    i,
                    &v,
                    &u,
                    DrawDiag {
                        divergent: i == 2,
                        energy: 1.5 + i as f64,
                        depth: i as u32,
                        step_size: 0.25,
                    },
                );
            }
        }
        d
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let d = sample_draws();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.phyd");
        d.write_binary(&path).unwrap();
        let back = Draws::read_binary(&path).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.phyd");
        std::fs::write(&path, b"NOPExxxxxxxxxxxxxxx").unwrap();
        assert!(Draws::read_binary(&path).is_err());
    }

    #[test]
    fn csv_has_expected_shape() {
        let d = sample_draws();
        let mut buf = Vec::new();
        d.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines[0].starts_with("chain,iter,a,b,divergent,energy,depth,step_size"));
        // row for chain 1, iter 2 carries the divergence flag
        assert!(lines[6].starts_with("1,2,"));
        assert!(lines[6].contains(",1,"), "divergent flag present");
    }

    #[test]
    fn param_access_helpers() {
        let d = sample_draws();
        assert_eq!(d.index_of("b"), Some(1));
        assert_eq!(d.param_draws(0).len(), 6);
        assert_eq!(d.chain_param(1, 1), vec![-1.0, -2.0, -3.0]);
        assert_eq!(d.row(0, 1)[0], 0.1);
        assert_eq!(d.unconstrained_row(0, 1)[0], 0.2);
    }
}
