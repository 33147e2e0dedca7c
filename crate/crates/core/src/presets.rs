//! Ready-made synthetic signals.

use crate::spectral::PeakModel;

/// Five zero-phase peaks of mixed widths, from a narrow strong line to a
/// broad weak one. The narrowest decay constant is a third of 256 points, so
/// a 256-point record has decayed to about 5% and is not truncated.
pub fn five_peaks() -> Vec<PeakModel> {
    [(1.0, 0.15, 85.0), (0.8, 0.3, 60.0), (0.6, 0.45, 40.0), (0.4, 0.6, 20.0), (0.25, 0.8, 10.0)]
        .into_iter()
        .map(|(amplitude, frequency, decay)| PeakModel { amplitude, frequency, decay, phase: 0.0 })
        .collect()
}
