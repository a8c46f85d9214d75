use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Method, OutlierSchedule};
use crate::error::{Error, Result};

/// Lorenz-96 experiment grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Lorenz3dvar,
    Lorenz4dvar,
    LorenzLetkf,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Lorenz3dvar, Protocol::Lorenz4dvar, Protocol::LorenzLetkf];

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Lorenz3dvar => "lorenz_3dvar",
            Protocol::Lorenz4dvar => "lorenz_4dvar",
            Protocol::LorenzLetkf => "lorenz_letkf",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown protocol '{s}'")))
    }
}

/// Experiments making up `protocol` for one seed. Each runs all of its
/// method's norms on good and bad data.
///
/// - 3D-Var: frequencies 0.01 and 0.1, tau 1 and 3, 2-unit window,
///   outliers every 0.2 units.
/// - 4D-Var: one 0.6-unit window observed every 0.1, tau 2, outlier at
///   every observation.
/// - LETKF: as 3D-Var, with 20 members.
pub fn grid_configs(protocol: Protocol, seed: u64) -> Vec<ExperimentConfig> {
    match protocol {
        Protocol::Lorenz3dvar | Protocol::LorenzLetkf => {
            let method = if protocol == Protocol::Lorenz3dvar { Method::Var3d } else { Method::Letkf };
            let mut out = Vec::new();
            for freq in [0.01, 0.1] {
                for tau in [1.0, 3.0] {
                    out.push(ExperimentConfig::new(method, freq, 2.0, tau, seed));
                }
            }
            out
        }
        Protocol::Lorenz4dvar => {
            let mut cfg = ExperimentConfig::new(Method::Var4d, 0.1, 0.6, 2.0, seed);
            cfg.outliers = OutlierSchedule { period: None, ..OutlierSchedule::default() };
            vec![cfg]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analysis_series(p: Protocol) -> usize {
        grid_configs(p, 0).iter().map(|c| c.norms().len() * c.data.len()).sum()
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(analysis_series(Protocol::Lorenz3dvar), 32);
        assert_eq!(analysis_series(Protocol::Lorenz4dvar), 8);
        assert_eq!(analysis_series(Protocol::LorenzLetkf), 24);
        for p in Protocol::ALL {
            assert_eq!(p.label().parse::<Protocol>().unwrap(), p);
            assert!(grid_configs(p, 5).iter().all(|c| c.validate().is_ok()));
        }
    }
}
