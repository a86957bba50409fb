//! Worst-case memory of the per-level candidate lists when the kd-tree
//! degenerates into a path: `(n - 1) * k * log2(k)` entries.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySize {
    /// One bit per entry.
    Bits,
    Bytes(u64),
}

impl Default for EntrySize {
    fn default() -> Self {
        EntrySize::Bytes(1)
    }
}

pub const MIB: f64 = 1024.0 * 1024.0;

/// `(n - 1) * k * log2(k)`, in entries.
pub fn worst_case_entries(n: u64, k: u64) -> Result<f64> {
    if n < 2 || k < 2 {
        return Err(Error::config("memory estimate needs n >= 2 and k >= 2"));
    }
    Ok((n - 1) as f64 * k as f64 * (k as f64).log2())
}

pub fn estimate_worst_case_bytes(n: u64, k: u64, entry: EntrySize) -> Result<f64> {
    let entries = worst_case_entries(n, k)?;
    Ok(match entry {
        EntrySize::Bits => entries / 8.0,
        EntrySize::Bytes(b) => entries * b as f64,
    })
}
