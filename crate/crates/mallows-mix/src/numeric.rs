//! Small numeric helpers shared across modules.

/// Compensated (Kahan) accumulator for long sums of same-sign terms, used
/// wherever factorially many probabilities are added up.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// SplitMix64 mixing step: a fixed, well-known 64-bit finalizer.
///
/// Used to derive independent, reproducible RNG stream seeds from a master
/// seed plus structured coordinates (distance, trial, role). Hand-rolled so
/// the byte-identical-output guarantee never depends on a dependency's
/// internal hasher changing between versions.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Folds coordinates into a master seed, one mixing round per coordinate.
pub fn stream_seed(master: u64, coords: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &c in coords {
        s = splitmix64(s ^ c.wrapping_mul(0xa076_1d64_78bd_642f));
    }
    s
}

/// Formats with the given number of significant digits, plain decimal
/// notation, for CSV output.
pub fn format_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() {
            format!("{:.*}", sig - 1, 0.0)
        } else {
            x.to_string()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}
