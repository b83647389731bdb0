//! Scenario files, seeded campaigns over user drops, CDF statistics and
//! parameter sweeps.

pub mod campaign;
pub mod checks;
pub mod scenario;
pub mod stats;
pub mod sweep;

pub use campaign::{
    campaign_profile, flat_ensemble, run_campaign, run_campaign_with, CampaignOptions, CampaignResult, DropFailure, DropResult,
    UserRow,
};
pub use checks::{nmse_csv, nmse_vs_antennas, validate_closed_form, validation_csv, NmsePoint, ValidationRow};
pub use scenario::{
    AllocationConfig, AllocationMethod, AlphaMode, Fading, Format, MobilityConfig, MonteCarlo, Scenario, Users,
};
pub use stats::{cdf_stats, quantile_sorted, CdfStats};
pub use sweep::{sweep, SweepAxis, SweepRow, SweepTable};
