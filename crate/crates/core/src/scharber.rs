//! Open-circuit voltage and power conversion efficiency from frontier orbital energies.
//!
//! Energies are in eV with the elementary charge absorbed, so an energy
//! difference in eV reads directly as a voltage in V.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SinetError};

/// Empirical voltage loss subtracted from the orbital offset, in V.
pub const VOLTAGE_LOSS_V: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScharberInputs {
    /// Donor HOMO, eV.
    pub e_homo_donor: f64,
    /// Acceptor LUMO, eV.
    pub e_lumo_acceptor: f64,
    /// Fill factor, dimensionless in (0, 1].
    pub fill_factor: f64,
    /// Short-circuit current density, mA/cm².
    pub j_sc: f64,
    /// Incident light intensity, mW/cm².
    pub p_in: f64,
}

impl ScharberInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_in > 0.0) {
            return Err(SinetError::Domain(format!("P_in must be positive, got {}", self.p_in)));
        }
        if !(self.fill_factor > 0.0 && self.fill_factor <= 1.0) {
            return Err(SinetError::Domain(format!(
                "fill factor must lie in (0, 1], got {}",
                self.fill_factor
            )));
        }
        if !(self.j_sc >= 0.0) {
            return Err(SinetError::Domain(format!("J_sc must be non-negative, got {}", self.j_sc)));
        }
        Ok(())
    }
}

/// `Voc = (E_HOMO,donor − E_LUMO,acceptor) − 0.3`, taken literally; negative
/// for the usual case of a donor HOMO lying below the acceptor LUMO.
pub fn open_circuit_voltage(e_homo_donor: f64, e_lumo_acceptor: f64) -> f64 {
    (e_homo_donor - e_lumo_acceptor) - VOLTAGE_LOSS_V
}

/// `|E_HOMO,donor| − |E_LUMO,acceptor| − 0.3`, the magnitude convention that
/// gives positive voltages for typical donor/acceptor pairs.
pub fn open_circuit_voltage_magnitude(e_homo_donor: f64, e_lumo_acceptor: f64) -> f64 {
    e_homo_donor.abs() - e_lumo_acceptor.abs() - VOLTAGE_LOSS_V
}

/// `PCE = 100 · Voc · FF · Jsc / Pin`, in percent.
pub fn pce(voc: f64, fill_factor: f64, j_sc: f64, p_in: f64) -> Result<f64> {
    if !(p_in > 0.0) {
        return Err(SinetError::Domain(format!("P_in must be positive, got {p_in}")));
    }
    Ok(100.0 * voc * fill_factor * j_sc / p_in)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScharberResult {
    pub voc: f64,
    pub pce: f64,
}

/// Voc and PCE for validated inputs using the literal voltage formula.
pub fn evaluate(inputs: &ScharberInputs) -> Result<ScharberResult> {
    inputs.validate()?;
    let voc = open_circuit_voltage(inputs.e_homo_donor, inputs.e_lumo_acceptor);
    Ok(ScharberResult {
        voc,
        pce: pce(voc, inputs.fill_factor, inputs.j_sc, inputs.p_in)?,
    })
}

/// As [`evaluate`], with the magnitude-convention voltage.
pub fn evaluate_magnitude(inputs: &ScharberInputs) -> Result<ScharberResult> {
    inputs.validate()?;
    let voc = open_circuit_voltage_magnitude(inputs.e_homo_donor, inputs.e_lumo_acceptor);
    Ok(ScharberResult {
        voc,
        pce: pce(voc, inputs.fill_factor, inputs.j_sc, inputs.p_in)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn voc_examples() {
        assert!(close(open_circuit_voltage(-5.0, -4.7), -0.6));
        assert_eq!(open_circuit_voltage(0.3, 0.0), 0.0);
        assert!(open_circuit_voltage(-5.0, -4.0) < open_circuit_voltage(-4.9, -4.0));
        assert!(open_circuit_voltage(-5.0, -4.0) > open_circuit_voltage(-5.0, -3.9));
    }

    #[test]
    fn pce_examples() {
        assert!(close(pce(0.7, 0.65, 15.0, 100.0).unwrap(), 6.825));
        assert_eq!(pce(0.0, 0.65, 15.0, 100.0).unwrap(), 0.0);
        let a = pce(0.7, 0.65, 15.0, 100.0).unwrap();
        let b = pce(0.7, 0.65, 15.0, 200.0).unwrap();
        assert!(close(b, a / 2.0));
        assert!(pce(0.7, 0.65, 15.0, 0.0).is_err());
    }

    #[test]
    fn magnitude_convention_is_positive_for_typical_pairs() {
        assert!(close(open_circuit_voltage_magnitude(-5.4, -4.0), 1.1));
    }

    #[test]
    fn evaluate_validates() {
        let ok = ScharberInputs {
            e_homo_donor: -5.0,
            e_lumo_acceptor: -4.7,
            fill_factor: 0.65,
            j_sc: 15.0,
            p_in: 100.0,
        };
        let r = evaluate(&ok).unwrap();
        assert!(close(r.voc, -0.6) && close(r.pce, -5.85));
        assert!(evaluate(&ScharberInputs { fill_factor: 1.5, ..ok }).is_err());
        assert!(evaluate(&ScharberInputs { j_sc: -1.0, ..ok }).is_err());
    }
}
