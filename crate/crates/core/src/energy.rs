//! First-order radio energy model and the per-run energy ledger.
//!
//! Transmitting `l` bits over `d` meters costs `l*E_elec + l*eps_fs*d^2` up to
//! the threshold distance `d0 = sqrt(eps_fs/eps_mp)` and `l*E_elec +
//! l*eps_mp*d^4` beyond it. Receiving costs `l*E_elec`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, NodeState, Topology, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("invalid radio parameters: {0}")]
    InvalidParams(String),
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
}

/// Radio constants. `e_da` (aggregation cost) is carried for completeness
/// and never consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    e_elec: f64,
    eps_fs: f64,
    eps_mp: f64,
    e_da: f64,
    d0: f64,
}

impl RadioParams {
    pub fn new(e_elec: f64, eps_fs: f64, eps_mp: f64, e_da: f64) -> Result<Self, EnergyError> {
        for (name, v) in [
            ("e_elec", e_elec),
            ("eps_fs", eps_fs),
            ("eps_mp", eps_mp),
            ("e_da", e_da),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnergyError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let d0 = threshold_distance(eps_fs, eps_mp)?;
        Ok(RadioParams {
            e_elec,
            eps_fs,
            eps_mp,
            e_da,
            d0,
        })
    }

    /// 50 nJ/bit electronics, 10 pJ/bit/m^2 free space, 0.0013 pJ/bit/m^4
    /// multi-path, 5 nJ/bit/signal aggregation.
    pub fn reference() -> Self {
        RadioParams::new(50e-9, 10e-12, 0.0013e-12, 5e-9).expect("reference constants are valid")
    }

    pub fn e_elec(&self) -> f64 {
        self.e_elec
    }

    pub fn eps_fs(&self) -> f64 {
        self.eps_fs
    }

    pub fn eps_mp(&self) -> f64 {
        self.eps_mp
    }

    pub fn e_da(&self) -> f64 {
        self.e_da
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }
}

/// `sqrt(eps_fs / eps_mp)`, the crossover between the d^2 and d^4 regimes.
pub fn threshold_distance(eps_fs: f64, eps_mp: f64) -> Result<f64, EnergyError> {
    if !(eps_fs > 0.0 && eps_mp > 0.0) {
        return Err(EnergyError::InvalidParams(format!(
            "amplifier constants must be positive, got eps_fs={eps_fs}, eps_mp={eps_mp}"
        )));
    }
    Ok((eps_fs / eps_mp).sqrt())
}

pub fn tx_energy(bits: u64, d: f64, params: &RadioParams) -> Result<f64, EnergyError> {
    if bits == 0 {
        return Err(EnergyError::InvalidArgs(
            "bit count must be positive".into(),
        ));
    }
    if !d.is_finite() || d < 0.0 {
        return Err(EnergyError::InvalidArgs(format!(
            "distance must be >= 0, got {d}"
        )));
    }
    let l = bits as f64;
    let amp = if d <= params.d0 {
        l * params.eps_fs * d * d
    } else {
        l * params.eps_mp * d * d * d * d
    };
    Ok(l * params.e_elec + amp)
}

pub fn rx_energy(bits: u64, params: &RadioParams) -> Result<f64, EnergyError> {
    if bits == 0 {
        return Err(EnergyError::InvalidArgs(
            "bit count must be positive".into(),
        ));
    }
    Ok(bits as f64 * params.e_elec)
}

/// Neumaier-compensated running sum. Energy draws span many orders of
/// magnitude relative to the battery, so naive accumulation drifts.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnergyEvent {
    Transmit { distance: f64 },
    Receive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedgerEntry {
    pub node: NodeId,
    #[serde(flatten)]
    pub event: EnergyEvent,
    pub bits: u64,
    pub joules: f64,
    pub sim_time: f64,
}

impl EnergyLedgerEntry {
    pub fn transmit(
        node: NodeId,
        bits: u64,
        distance: f64,
        sim_time: f64,
        params: &RadioParams,
    ) -> Result<Self, EnergyError> {
        Ok(EnergyLedgerEntry {
            node,
            event: EnergyEvent::Transmit { distance },
            bits,
            joules: tx_energy(bits, distance, params)?,
            sim_time,
        })
    }

    pub fn receive(
        node: NodeId,
        bits: u64,
        sim_time: f64,
        params: &RadioParams,
    ) -> Result<Self, EnergyError> {
        Ok(EnergyLedgerEntry {
            node,
            event: EnergyEvent::Receive,
            bits,
            joules: rx_energy(bits, params)?,
            sim_time,
        })
    }

    /// The energy implied by this entry's own kind, bits and distance.
    pub fn recompute(&self, params: &RadioParams) -> Result<f64, EnergyError> {
        match self.event {
            EnergyEvent::Transmit { distance } => tx_energy(self.bits, distance, params),
            EnergyEvent::Receive => rx_energy(self.bits, params),
        }
    }
}

/// Append-only record of every energy draw in one simulation.
#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    entries: Vec<EnergyLedgerEntry>,
    total: CompensatedSum,
    clamped: usize,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[EnergyLedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Compensated sum of every entry.
    pub fn total(&self) -> f64 {
        self.total.value()
    }

    /// Number of debits that hit an empty battery.
    pub fn clamped_debits(&self) -> usize {
        self.clamped
    }

    /// Debits the entry's node in `topo`, see [`debit`].
    pub fn charge(
        &mut self,
        topo: &mut Topology,
        entry: EnergyLedgerEntry,
    ) -> Result<f64, TopologyError> {
        let node = topo.node_mut(entry.node)?;
        Ok(debit(node, entry, self))
    }
}

/// Subtracts `entry.joules` from the node, clamping at zero and marking the
/// node dead when the battery empties. The event is recorded even when it
/// exhausted the node. Returns the new residual energy.
pub fn debit(node: &mut NodeState, entry: EnergyLedgerEntry, ledger: &mut EnergyLedger) -> f64 {
    debug_assert_eq!(node.id, entry.node);
    let before = node.residual_energy();
    if node.draw(entry.joules) || entry.joules > before {
        ledger.clamped += 1;
    }
    ledger.total.add(entry.joules);
    ledger.entries.push(entry);
    node.residual_energy()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Position;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn threshold_distance_examples() {
        let d0 = threshold_distance(10e-12, 0.0013e-12).unwrap();
        assert!((d0 - 87.705_801_930_702_92).abs() < 1e-9);
        assert!((d0 - 87.706).abs() < 1e-3);
        assert_eq!(threshold_distance(3.0, 3.0).unwrap(), 1.0);
        assert_eq!(threshold_distance(4.0, 1.0).unwrap(), 2.0);
        assert!(threshold_distance(0.0, 1.0).is_err());
        assert!(RadioParams::new(50e-9, 10e-12, -1.0, 5e-9).is_err());
    }

    #[test]
    fn cached_d0_matches_formula() {
        let p = RadioParams::reference();
        let expect = (p.eps_fs() / p.eps_mp()).sqrt();
        assert!(rel(p.d0(), expect) < 1e-9);
    }

    #[test]
    fn tx_energy_examples() {
        let p = RadioParams::reference();
        // 4096*50e-9 + 4096*10e-12*40^2
        assert!(rel(tx_energy(4096, 40.0, &p).unwrap(), 270.336e-6) < 1e-12);
        // 4096*50e-9 + 4096*0.0013e-12*100^4
        assert!(rel(tx_energy(4096, 100.0, &p).unwrap(), 737.28e-6) < 1e-12);
        assert_eq!(tx_energy(4096, 0.0, &p).unwrap(), 4096.0 * 50e-9);
        assert!(tx_energy(0, 1.0, &p).is_err());
        assert!(tx_energy(1, -1.0, &p).is_err());
    }

    #[test]
    fn rx_energy_examples() {
        let p = RadioParams::reference();
        assert!(rel(rx_energy(4096, &p).unwrap(), 204.8e-6) < 1e-12);
        assert_eq!(rx_energy(1, &p).unwrap(), p.e_elec());
        for l in [1, 7, 1024, 4096, 1 << 20] {
            assert_eq!(rx_energy(l, &p).unwrap(), tx_energy(l, 0.0, &p).unwrap());
        }
        assert!(rx_energy(0, &p).is_err());
    }

    #[test]
    fn threshold_uses_free_space_branch() {
        let p = RadioParams::reference();
        let at = tx_energy(1000, p.d0(), &p).unwrap();
        let free_space = 1000.0 * p.e_elec() + 1000.0 * p.eps_fs() * p.d0() * p.d0();
        assert_eq!(at, free_space);
    }

    #[test]
    fn continuous_at_threshold() {
        let p = RadioParams::reference();
        let eps = 1e-6;
        let lo = tx_energy(4096, p.d0() - eps, &p).unwrap();
        let hi = tx_energy(4096, p.d0() + eps, &p).unwrap();
        assert!(rel(lo, hi) < 1e-6);
    }

    #[test]
    fn debit_examples() {
        let p = RadioParams::reference();
        let mut ledger = EnergyLedger::new();
        let mut node = NodeState::new(NodeId(3), Position::new(0.0, 0.0), 2.0);
        let e = EnergyLedgerEntry::transmit(NodeId(3), 4096, 40.0, 0.0, &p).unwrap();
        let left = debit(&mut node, e, &mut ledger);
        assert!((left - 1.999_729_664).abs() < 1e-15);
        assert!(node.is_alive());
        assert_eq!(ledger.clamped_debits(), 0);

        let mut weak = NodeState::new(NodeId(4), Position::new(0.0, 0.0), 100e-6);
        let e = EnergyLedgerEntry::receive(NodeId(4), 4096, 0.0, &p).unwrap();
        assert_eq!(debit(&mut weak, e, &mut ledger), 0.0);
        assert!(!weak.is_alive());
        assert_eq!(ledger.clamped_debits(), 1);
        assert_eq!(ledger.len(), 2);
    }

    #[test]
    fn ledger_conserves_energy() {
        let p = RadioParams::reference();
        let positions = (0..10).map(|i| Position::new(i as f64, 0.0)).collect();
        let mut topo = Topology::from_positions(20.0, 20.0, 5.0, 2.0, positions).unwrap();
        let mut ledger = EnergyLedger::new();
        for step in 0..5000u64 {
            let id = NodeId((step % 10) as u32);
            let entry = if step % 3 == 0 {
                EnergyLedgerEntry::receive(id, 1000 + step, step as f64, &p).unwrap()
            } else {
                EnergyLedgerEntry::transmit(id, 800 + step, (step % 120) as f64, step as f64, &p)
                    .unwrap()
            };
            ledger.charge(&mut topo, entry).unwrap();
        }
        assert_eq!(ledger.clamped_debits(), 0);
        let initial: f64 = topo.nodes().iter().map(|n| n.initial_energy()).sum();
        let residual: CompensatedSum = topo.nodes().iter().map(|n| n.residual_energy()).collect();
        let drawn = initial - residual.value();
        assert!(
            rel(drawn, ledger.total()) < 1e-12,
            "{drawn} vs {}",
            ledger.total()
        );
        for e in ledger.entries() {
            assert_eq!(e.recompute(&p).unwrap(), e.joules);
        }
    }
}
