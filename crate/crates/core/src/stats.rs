//! Data-transfer and PIM activity counters.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Snapshot (or delta) of everything that crossed the PIM/host boundary,
/// plus in-memory activity.
///
/// `inter_array_bits` counts host-mediated copies between the two arrays of a
/// vertically split page. They are kept apart from `pim_to_host_bits` so the
/// filter read law (one bit per record) stays observable; `total_transfer_bits`
/// includes them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferStats {
    pub pim_to_host_bits: u64,
    pub host_to_pim_bits: u64,
    pub inter_array_bits: u64,
    pub pim_col_ops: u64,
    pub cell_writes: u64,
    pub periph_row_reads: u64,
    pub host_baseline_bits: u64,
}

impl TransferStats {
    /// Counter-wise `self - before`; `host_baseline_bits` is taken from `self`.
    pub fn since(&self, before: &TransferStats) -> TransferStats {
        TransferStats {
            pim_to_host_bits: self.pim_to_host_bits - before.pim_to_host_bits,
            host_to_pim_bits: self.host_to_pim_bits - before.host_to_pim_bits,
            inter_array_bits: self.inter_array_bits - before.inter_array_bits,
            pim_col_ops: self.pim_col_ops - before.pim_col_ops,
            cell_writes: self.cell_writes - before.cell_writes,
            periph_row_reads: self.periph_row_reads - before.periph_row_reads,
            host_baseline_bits: self.host_baseline_bits,
        }
    }

    pub fn total_transfer_bits(&self) -> u64 {
        self.pim_to_host_bits + self.host_to_pim_bits + self.inter_array_bits
    }

    /// `host_baseline_bits / pim_to_host_bits`, when both are positive.
    pub fn reduction_ratio(&self) -> Option<f64> {
        (self.host_baseline_bits > 0 && self.pim_to_host_bits > 0)
            .then(|| self.host_baseline_bits as f64 / self.pim_to_host_bits as f64)
    }
}

/// Transfer counters shared by concurrently executing pages.
#[derive(Debug, Default)]
pub(crate) struct Tally {
    pub pim_to_host: AtomicU64,
    pub host_to_pim: AtomicU64,
    pub inter_array: AtomicU64,
    pub periph_row_reads: AtomicU64,
}

impl Tally {
    pub fn add_pim_to_host(&self, bits: u64) {
        self.pim_to_host.fetch_add(bits, Ordering::Relaxed);
    }
    pub fn add_host_to_pim(&self, bits: u64) {
        self.host_to_pim.fetch_add(bits, Ordering::Relaxed);
    }
    pub fn add_inter_array(&self, bits: u64) {
        self.inter_array.fetch_add(bits, Ordering::Relaxed);
    }
    pub fn add_periph_rows(&self, rows: u64) {
        self.periph_row_reads.fetch_add(rows, Ordering::Relaxed);
    }

    pub fn load(&self) -> (u64, u64, u64, u64) {
        (
            self.pim_to_host.load(Ordering::Relaxed),
            self.host_to_pim.load(Ordering::Relaxed),
            self.inter_array.load(Ordering::Relaxed),
            self.periph_row_reads.load(Ordering::Relaxed),
        )
    }
}

impl Clone for Tally {
    fn clone(&self) -> Self {
        let (a, b, c, d) = self.load();
        Tally {
            pim_to_host: AtomicU64::new(a),
            host_to_pim: AtomicU64::new(b),
            inter_array: AtomicU64::new(c),
            periph_row_reads: AtomicU64::new(d),
        }
    }
}
