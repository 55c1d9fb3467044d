//! Forward-pass scaling of landmark convolution against global attention and
//! the point-based baselines: median wall time and allocator high-water mark
//! per feature-map size, plus log-log slope fits.

pub mod alloc;
mod error;
mod scaling;

pub use alloc::CountingAlloc;
pub use error::{BenchError, Result};
pub use scaling::{
    fit_loglog_slope, fit_loglog_slope_by, loglog_slope, records_for, run_scaling, slopes, write_csv, BenchRecord,
    Operator, Slopes, DEFAULT_CHANNELS, DEFAULT_REPEATS, DEFAULT_SIZES, MIN_REPEATS,
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let lin: Vec<_> = [256.0, 1024.0, 4096.0, 16384.0].iter().map(|&n| (n, 3.5 * n)).collect();
        assert!((loglog_slope(&lin).unwrap() - 1.0).abs() < 1e-9);
        let quad: Vec<_> = lin.iter().map(|&(n, _)| (n, 0.25 * n * n)).collect();
        assert!((loglog_slope(&quad).unwrap() - 2.0).abs() < 1e-9);
        assert!(matches!(loglog_slope(&lin[..2]), Err(BenchError::TooFewPoints(2))));
        assert!(loglog_slope(&[(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn operator_names_round_trip() {
        for op in Operator::ALL {
            assert_eq!(op.name().parse::<Operator>().unwrap(), op);
        }
        assert!("conv".parse::<Operator>().is_err());
    }
}
