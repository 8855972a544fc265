//! Staged output files and CSV helpers.
//!
//! Files are written under a temporary name and renamed into place only when
//! the whole command succeeds. Dropping an uncommitted [`Staging`] deletes
//! everything it wrote, so a failed run leaves no partial outputs behind.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use poptemp::numfmt::g17;
use sha2::{Digest, Sha256};

/// Wraps a writer and hashes everything passing through it.
pub struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> HashingWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: Sha256::new(),
        }
    }

    /// Flushes and returns the hex digest of everything written.
    pub fn finish(mut self) -> io::Result<String> {
        self.inner.flush()?;
        Ok(hex::encode(self.hasher.finalize()))
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// SHA-256 of a file's contents, as lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(h.finalize()))
}

fn temp_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().expect("output path has a file name").to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// A set of output files that appear together or not at all.
#[derive(Default)]
pub struct Staging {
    staged: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl Staging {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes one file through `f`, returning its SHA-256.
    pub fn write<F>(&mut self, path: &Path, f: F) -> Result<String>
    where
        F: FnOnce(&mut HashingWriter<BufWriter<File>>) -> Result<()>,
    {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let tmp = temp_name(path);
        let file = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        self.staged.push((tmp.clone(), path.to_path_buf()));
        let mut w = HashingWriter::new(BufWriter::with_capacity(1 << 20, file));
        f(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.finish().with_context(|| format!("writing {}", path.display()))
    }

    /// Renames every staged file into place.
    pub fn commit(mut self) -> Result<()> {
        for (tmp, path) in &self.staged {
            fs::rename(tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}

/// A CSV cell: numbers at 17 significant digits, `None` as an empty field.
pub fn num(v: f64) -> String {
    g17(v)
}

pub fn opt(v: Option<f64>) -> String {
    v.map(g17).unwrap_or_default()
}

/// Writes a header and rows as CSV.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        {
            let mut s = Staging::new();
            s.write(&a, |w| Ok(w.write_all(b"hello")?)).unwrap();
            assert!(temp_name(&a).exists());
        }
        assert!(!a.exists() && !temp_name(&a).exists());

        let mut s = Staging::new();
        let digest = s.write(&a, |w| Ok(w.write_all(b"hello")?)).unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read(&a).unwrap(), b"hello");
        assert_eq!(digest, sha256_file(&a).unwrap());
        assert_eq!(digest, "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
    }

    #[test]
    fn csv_cells() {
        assert_eq!(num(0.1), "0.10000000000000001");
        assert_eq!(opt(None), "");
        let mut out = Vec::new();
        write_csv(&mut out, &["a", "b"], &[vec![num(1.0), opt(Some(2.5))]]).unwrap();
        assert_eq!(out, b"a,b\n1,2.5\n");
    }
}
