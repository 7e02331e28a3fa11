//! Post-simulation energy accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::result::SimResult;

/// Per-event energies. The defaults are representative 45 nm-class values,
/// not calibrated constants: compare ratios and orderings, not joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyCoefficients {
    pub pj_per_mac: f64,
    pub pj_per_sram_byte: f64,
    pub pj_per_dram_byte: f64,
    pub leakage_watts: f64,
    pub clock_hz: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        Self {
            pj_per_mac: 4.0,
            pj_per_sram_byte: 0.5,
            pj_per_dram_byte: 20.0,
            leakage_watts: 0.1,
            clock_hz: 1e9,
        }
    }
}

impl EnergyCoefficients {
    pub fn zero() -> Self {
        Self {
            pj_per_mac: 0.0,
            pj_per_sram_byte: 0.0,
            pj_per_dram_byte: 0.0,
            leakage_watts: 0.0,
            clock_hz: 1e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pj_per_mac,
            self.pj_per_sram_byte,
            self.pj_per_dram_byte,
            self.leakage_watts,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("energy coefficients must be finite and non-negative".into()));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::Config(format!("clock must be positive, got {}", self.clock_hz)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dynamic_mac_pj: f64,
    pub dynamic_sram_pj: f64,
    pub dynamic_dram_pj: f64,
    pub static_pj: f64,
    pub total_pj: f64,
}

impl EnergyReport {
    pub fn dynamic_pj(&self) -> f64 {
        self.dynamic_mac_pj + self.dynamic_sram_pj + self.dynamic_dram_pj
    }

    /// The total is the left-to-right sum of the four components.
    pub fn is_exact_sum(&self) -> bool {
        self.total_pj == self.dynamic_mac_pj + self.dynamic_sram_pj + self.dynamic_dram_pj + self.static_pj
    }
}

/// Counters of a run that energy depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyCounters {
    pub mac_ops: u64,
    pub sram_bytes: u64,
    pub dram_bytes: u64,
    pub cycles: u64,
}

impl From<&SimResult> for EnergyCounters {
    fn from(r: &SimResult) -> Self {
        Self {
            mac_ops: r.mac_ops,
            sram_bytes: r.sram_bytes,
            dram_bytes: r.traffic.bytes_read + r.traffic.bytes_written,
            cycles: r.total_cycles,
        }
    }
}

pub fn energy_from_counters(c: EnergyCounters, coeff: &EnergyCoefficients) -> EnergyReport {
    let dynamic_mac_pj = c.mac_ops as f64 * coeff.pj_per_mac;
    let dynamic_sram_pj = c.sram_bytes as f64 * coeff.pj_per_sram_byte;
    let dynamic_dram_pj = c.dram_bytes as f64 * coeff.pj_per_dram_byte;
    let static_pj = coeff.leakage_watts * (c.cycles as f64 / coeff.clock_hz) * 1e12;
    EnergyReport {
        dynamic_mac_pj,
        dynamic_sram_pj,
        dynamic_dram_pj,
        static_pj,
        total_pj: dynamic_mac_pj + dynamic_sram_pj + dynamic_dram_pj + static_pj,
    }
}

pub fn compute_energy(result: &SimResult, coeff: &EnergyCoefficients) -> EnergyReport {
    energy_from_counters(EnergyCounters::from(result), coeff)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters() -> EnergyCounters {
        EnergyCounters {
            mac_ops: 1000,
            sram_bytes: 4096,
            dram_bytes: 640,
            cycles: 5000,
        }
    }

    #[test]
    fn zero_coefficients() {
        let r = energy_from_counters(counters(), &EnergyCoefficients::zero());
        assert_eq!(r.total_pj, 0.0);
    }

    #[test]
    fn leakage_unit_arithmetic() {
        let coeff = EnergyCoefficients {
            leakage_watts: 0.1,
            ..EnergyCoefficients::zero()
        };
        let c = EnergyCounters {
            mac_ops: 0,
            sram_bytes: 0,
            dram_bytes: 0,
            cycles: 1_000_000,
        };
        // 0.1 W for 1 ms = 1e-4 J = 1e8 pJ
        let r = energy_from_counters(c, &coeff);
        assert!((r.static_pj - 1e8).abs() < 1e-6);
    }

    #[test]
    fn components_and_total() {
        let r = energy_from_counters(counters(), &EnergyCoefficients::default());
        assert_eq!(r.dynamic_mac_pj, 4000.0);
        assert_eq!(r.dynamic_sram_pj, 2048.0);
        assert_eq!(r.dynamic_dram_pj, 12_800.0);
        assert!(r.is_exact_sum());
    }

    #[test]
    fn negative_coefficient_rejected() {
        let c = EnergyCoefficients {
            pj_per_mac: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(EnergyCoefficients::default().validate().is_ok());
    }
}
