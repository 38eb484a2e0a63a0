use std::ops::AddAssign;

/// Multiply-add tally split by where the work happens.
///
/// `dense_macs` covers every affine map (attention projections, MLP and
/// feed-forward layers); `attention_macs` covers only the token-pair work of
/// attention (scores `QKᵀ` and the weighted sum `AV`), which is the part whose
/// cost grows with the number of interacting tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounter {
    pub dense_macs: u64,
    pub attention_macs: u64,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.dense_macs + self.attention_macs
    }

    #[inline]
    pub(crate) fn add_dense(&mut self, macs: usize) {
        self.dense_macs += macs as u64;
    }

    #[inline]
    pub(crate) fn add_attention(&mut self, macs: usize) {
        self.attention_macs += macs as u64;
    }
}

impl AddAssign for FlopCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.dense_macs += rhs.dense_macs;
        self.attention_macs += rhs.attention_macs;
    }
}

pub(crate) fn tally(flops: &mut Option<&mut FlopCounter>, f: impl FnOnce(&mut FlopCounter)) {
    if let Some(c) = flops.as_deref_mut() {
        f(c);
    }
}
