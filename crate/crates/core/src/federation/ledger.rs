/// Running count of scalars transferred between clients and the server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommLedger {
    pub phase1_scalars: u64,
    pub phase2_upload_scalars: u64,
    pub phase2_download_scalars: u64,
    pub sync_count: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_phase1(&mut self, scalars: u64) {
        self.phase1_scalars += scalars;
    }

    /// One full synchronization: every client uploads its deltas and
    /// downloads the global statistics, `stat_size` scalars each way.
    pub fn record_sync(&mut self, clients: usize, stat_size: u64) {
        let per_direction = clients as u64 * stat_size;
        self.phase2_upload_scalars += per_direction;
        self.phase2_download_scalars += per_direction;
        self.sync_count += 1;
    }

    pub fn phase2_scalars(&self) -> u64 {
        self.phase2_upload_scalars + self.phase2_download_scalars
    }

    pub fn total(&self) -> u64 {
        self.phase1_scalars + self.phase2_scalars()
    }
}

/// `d² + d`: a dense `d×d` matrix plus a `d`-vector.
pub fn stat_size(dim: usize) -> u64 {
    let d = dim as u64;
    d * d + d
}
