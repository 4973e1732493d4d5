//! Abstract cost accounting.
//!
//! Two routes to the same number: [`closed_form`] evaluates the per-strategy
//! total-cost expressions directly, while [`accumulate`] prices the stage
//! events every routed query actually recorded. [`reconcile`] compares them.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::RoutingOutcome;

/// Numeric type the closed-form totals can be evaluated in (`f64`, `f32`,
/// or an exact rational).
pub trait CostScalar: num_traits::Num + num_traits::FromPrimitive + Copy + PartialOrd + Debug {}

impl<T> CostScalar for T where T: num_traits::Num + num_traits::FromPrimitive + Copy + PartialOrd + Debug {}

/// Per-query stage prices, all in one abstract unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams<T = f64> {
    /// Base inference.
    pub c0: T,
    pub c_ret: T,
    pub c_rag: T,
    pub c_ttt: T,
    /// One reward-model evaluation.
    pub c_rew: T,
}

impl Default for CostParams<f64> {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c_ret: 1.0,
            c_rag: 2.0,
            c_ttt: 5.0,
            c_rew: 0.5,
        }
    }
}

impl<T: CostScalar> CostParams<T> {
    /// Requires every price ≥ 0 and `c_ttt > c_rag > 0`.
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let all = [self.c0, self.c_ret, self.c_rag, self.c_ttt, self.c_rew];
        // `!(x >= 0)` also catches NaN.
        if all.iter().any(|c| !(*c >= zero)) {
            return Err(Error::Config("cost parameters must be non-negative".into()));
        }
        if !(self.c_rag > zero && self.c_ttt > self.c_rag) {
            return Err(Error::Config("cost parameters must satisfy c_ttt > c_rag > 0".into()));
        }
        Ok(())
    }

    pub fn price(&self, stage: Stage) -> T {
        match stage {
            Stage::BaseInfer => self.c0,
            Stage::RewardEval => self.c_rew,
            Stage::Retrieve => self.c_ret,
            Stage::RagInfer => self.c_rag,
            Stage::TttTrain => self.c_ttt,
        }
    }
}

/// Strategy whose total cost is being computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostMode {
    NoAdapt,
    Rag,
    Ttt,
    Rttc,
    RttcJoint,
}

impl CostMode {
    pub const ALL: [CostMode; 5] = [
        CostMode::NoAdapt,
        CostMode::Rag,
        CostMode::Ttt,
        CostMode::Rttc,
        CostMode::RttcJoint,
    ];
}

/// Total cost of `n` queries. `d_rag`/`d_ttt` are the fractions routed to the
/// RAG and TTT branches; only the two routed modes read them.
pub fn closed_form<T: CostScalar>(mode: CostMode, n: u64, p: &CostParams<T>, d_rag: T, d_ttt: T) -> Result<T> {
    let zero = T::zero();
    let one = T::one();
    let slack = T::from_f64(1e-12).unwrap_or(zero);
    if !(d_rag >= zero) || !(d_ttt >= zero) || !(d_rag + d_ttt <= one + slack) {
        return Err(Error::InvalidFractions(format!("d_rag={d_rag:?}, d_ttt={d_ttt:?}")));
    }
    let n = T::from_u64(n).ok_or(Error::Config("query count not representable".into()))?;
    let two = one + one;
    let adapted = d_rag + d_ttt;
    Ok(match mode {
        CostMode::NoAdapt => n * p.c0,
        CostMode::Rag => n * (p.c0 + p.c_ret + p.c_rag),
        CostMode::Ttt => n * (p.c0 + p.c_ret + p.c_ttt),
        CostMode::Rttc => {
            n * (p.c0 + p.c_rew) + adapted * n * (p.c_ret + p.c_rag + p.c_rew) + d_ttt * n * p.c_ttt
        }
        CostMode::RttcJoint => {
            n * (p.c0 + p.c_rew) + adapted * n * (p.c_ret + p.c_rag + p.c_ttt + two * p.c_rew)
        }
    })
}

/// Pipeline stage that may incur cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    BaseInfer,
    RewardEval,
    Retrieve,
    RagInfer,
    TttTrain,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::BaseInfer,
        Stage::RewardEval,
        Stage::Retrieve,
        Stage::RagInfer,
        Stage::TttTrain,
    ];
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| format!("{st:?}") == s)
            .ok_or_else(|| Error::UnknownStage(s.to_owned()))
    }
}

/// One executed (or cache-bypassed) stage of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEvent {
    pub query_id: String,
    pub stage: Stage,
    pub units: f64,
    /// Served from the query-state cache; costs nothing.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bypassed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
}

impl CostEvent {
    pub fn new(query_id: &str, stage: Stage, p: &CostParams) -> Self {
        Self {
            query_id: query_id.to_owned(),
            stage,
            units: p.price(stage),
            bypassed: false,
            wall_seconds: None,
            token_count: None,
        }
    }

    pub fn bypassed(query_id: &str, stage: Stage) -> Self {
        Self {
            query_id: query_id.to_owned(),
            stage,
            units: 0.0,
            bypassed: true,
            wall_seconds: None,
            token_count: None,
        }
    }

    pub fn with_tokens(mut self, tokens: Option<u64>) -> Self {
        self.token_count = tokens;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub events: Vec<CostEvent>,
    pub totals_by_stage: BTreeMap<Stage, f64>,
}

impl CostLedger {
    pub fn push(&mut self, event: CostEvent) {
        *self.totals_by_stage.entry(event.stage).or_default() += event.units;
        self.events.push(event);
    }

    pub fn total(&self) -> f64 {
        self.totals_by_stage.values().sum()
    }

    /// Appends `other`'s events; totals are pure sums so order is irrelevant.
    pub fn merge(&mut self, other: CostLedger) {
        for e in other.events {
            self.push(e);
        }
    }
}

/// Prices every recorded stage with `p`. Cache-bypassed stages cost 0.
pub fn accumulate<'a, I>(outcomes: I, p: &CostParams) -> CostLedger
where
    I: IntoIterator<Item = &'a RoutingOutcome>,
{
    let mut ledger = CostLedger::default();
    for o in outcomes {
        for e in &o.cost_events {
            let mut e = e.clone();
            e.units = if e.bypassed { 0.0 } else { p.price(e.stage) };
            ledger.push(e);
        }
    }
    ledger
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub closed: f64,
    pub event: f64,
    pub delta: f64,
}

pub fn reconcile(
    ledger: &CostLedger,
    n: u64,
    p: &CostParams,
    d_rag: f64,
    d_ttt: f64,
    mode: CostMode,
) -> Result<Reconciliation> {
    let closed = closed_form(mode, n, p, d_rag, d_ttt)?;
    let event = ledger.total();
    Ok(Reconciliation {
        closed,
        event,
        delta: (closed - event).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i128>;

    fn q(n: i128, d: i128) -> Q {
        Ratio::new(n, d)
    }

    #[test]
    fn closed_form_examples() {
        let p = CostParams { c0: 1.0, ..CostParams::default() };
        assert_eq!(closed_form(CostMode::NoAdapt, 100, &p, 0.0, 0.0).unwrap(), 100.0);
        let p = CostParams::default();
        assert_eq!(
            closed_form(CostMode::Rttc, 40, &p, 0.0, 0.0).unwrap(),
            40.0 * (p.c0 + p.c_rew)
        );
    }

    #[test]
    fn worked_scenario_exact() {
        // 150 direct (c0 + c_rew = 1.5), 250 rag (c0 + 2c_rew + c_ret + c_rag = 5),
        // 600 ttt (5 + c_ttt = 10): 225 + 1250 + 6000 = 7475.
        let p = CostParams { c0: q(1, 1), c_ret: q(1, 1), c_rag: q(2, 1), c_ttt: q(5, 1), c_rew: q(1, 2) };
        let total = closed_form(CostMode::Rttc, 1000, &p, q(1, 4), q(3, 5)).unwrap();
        assert_eq!(total, q(7475, 1));
        let f = closed_form(CostMode::Rttc, 1000, &CostParams::default(), 0.25, 0.60).unwrap();
        assert!((f - 7475.0).abs() < 1e-9);
    }

    #[test]
    fn joint_formula() {
        // 1000 * 1.5 + 0.85 * 1000 * (1 + 2 + 5 + 1) = 1500 + 7650
        let p = CostParams { c0: q(1, 1), c_ret: q(1, 1), c_rag: q(2, 1), c_ttt: q(5, 1), c_rew: q(1, 2) };
        assert_eq!(closed_form(CostMode::RttcJoint, 1000, &p, q(1, 4), q(3, 5)).unwrap(), q(9150, 1));
    }

    #[test]
    fn invalid_fractions() {
        let p = CostParams::default();
        assert!(matches!(
            closed_form(CostMode::Rttc, 10, &p, 0.7, 0.4),
            Err(Error::InvalidFractions(_))
        ));
        assert!(closed_form(CostMode::Rttc, 10, &p, -0.1, 0.4).is_err());
        assert!(closed_form(CostMode::Rttc, 10, &p, f64::NAN, 0.4).is_err());
        let exact = CostParams { c0: q(1, 1), c_ret: q(1, 1), c_rag: q(2, 1), c_ttt: q(5, 1), c_rew: q(1, 2) };
        assert!(closed_form(CostMode::Rttc, 10, &exact, q(1, 2), q(2, 3)).is_err());
    }

    #[test]
    fn params_validation() {
        CostParams::default().validate().unwrap();
        let bad = CostParams { c_ttt: 1.0, ..CostParams::default() };
        assert!(bad.validate().is_err());
        let bad = CostParams { c_rew: -1.0, ..CostParams::default() };
        assert!(bad.validate().is_err());
        let bad = CostParams { c_rag: 0.0, ..CostParams::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stage_parse() {
        assert_eq!("TttTrain".parse::<Stage>().unwrap(), Stage::TttTrain);
        assert!(matches!("Nap".parse::<Stage>(), Err(Error::UnknownStage(_))));
    }

    #[test]
    fn ledger_merge_is_order_free() {
        let p = CostParams::default();
        let mut a = CostLedger::default();
        a.push(CostEvent::new("q1", Stage::BaseInfer, &p));
        a.push(CostEvent::new("q1", Stage::RewardEval, &p));
        let mut b = CostLedger::default();
        b.push(CostEvent::new("q2", Stage::TttTrain, &p));
        b.push(CostEvent::bypassed("q2", Stage::Retrieve));
        let mut ab = a.clone();
        ab.merge(b.clone());
        let mut ba = b;
        ba.merge(a);
        assert_eq!(ab.totals_by_stage, ba.totals_by_stage);
        assert_eq!(ab.total(), 1.0 + 0.5 + 5.0);
    }

    fn params() -> impl Strategy<Value = CostParams<Q>> {
        (0i128..50, 0i128..50, 1i128..50, 1i128..50, 0i128..50).prop_map(|(c0, ret, rag, extra, rew)| CostParams {
            c0: q(c0, 4),
            c_ret: q(ret, 4),
            c_rag: q(rag, 4),
            c_ttt: q(rag + extra, 4),
            c_rew: q(rew, 4),
        })
    }

    proptest! {
        #[test]
        fn rttc_monotone_in_fractions_and_prices(
            p in params(), a in 0i128..=100, b in 0i128..=100, n in 0u64..5000, bump in 1i128..10,
        ) {
            prop_assume!(a + b <= 100);
            let (dr, dt) = (q(a, 100), q(b, 100));
            let base = closed_form(CostMode::Rttc, n, &p, dr, dt).unwrap();
            if a + b < 100 {
                prop_assert!(closed_form(CostMode::Rttc, n, &p, dr + q(1, 100), dt).unwrap() >= base);
                prop_assert!(closed_form(CostMode::Rttc, n, &p, dr, dt + q(1, 100)).unwrap() >= base);
            }
            let d = q(bump, 4);
            for bumped in [
                CostParams { c0: p.c0 + d, ..p },
                CostParams { c_ret: p.c_ret + d, ..p },
                CostParams { c_rag: p.c_rag + d, ..p },
                CostParams { c_ttt: p.c_ttt + d, ..p },
                CostParams { c_rew: p.c_rew + d, ..p },
            ] {
                prop_assert!(closed_form(CostMode::Rttc, n, &bumped, dr, dt).unwrap() >= base);
            }
        }

        #[test]
        fn baseline_ordering(p in params(), n in 1u64..5000) {
            let z = q(0, 1);
            let none = closed_form(CostMode::NoAdapt, n, &p, z, z).unwrap();
            let rag = closed_form(CostMode::Rag, n, &p, z, z).unwrap();
            let ttt = closed_form(CostMode::Ttt, n, &p, z, z).unwrap();
            prop_assert!(ttt > rag && rag > none);
        }

        #[test]
        fn joint_premium(p in params(), a in 0i128..=100, b in 0i128..=100, n in 1u64..5000) {
            prop_assume!(a + b <= 100 && a + b > 0);
            let (dr, dt) = (q(a, 100), q(b, 100));
            let seq = closed_form(CostMode::Rttc, n, &p, dr, dt).unwrap();
            let joint = closed_form(CostMode::RttcJoint, n, &p, dr, dt).unwrap();
            prop_assert!(joint >= seq);
            // the premium is d_rag·N·c_ttt + (d_rag+d_ttt)·N·c_rew
            let nn = q(n as i128, 1);
            prop_assert_eq!(joint - seq, dr * nn * p.c_ttt + (dr + dt) * nn * p.c_rew);
        }
    }
}
