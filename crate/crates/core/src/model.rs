//! Core domain types: instances, bid profiles, allocations, outcomes and
//! liquid welfare.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tolerance;

/// A budget on the extended nonnegative reals: a positive finite amount or
/// `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget(f64);

impl Budget {
    pub const INFINITE: Budget = Budget(f64::INFINITY);

    pub fn finite(amount: f64) -> Result<Self> {
        if amount.is_finite() && amount > 0.0 {
            Ok(Budget(amount))
        } else {
            Err(Error::InvalidInstance(format!(
                "budget must be positive and finite (or \"inf\"), got {amount}"
            )))
        }
    }

    /// Accepts `+inf` as well as positive finite amounts.
    pub fn new(amount: f64) -> Result<Self> {
        if amount == f64::INFINITY {
            Ok(Self::INFINITE)
        } else {
            Self::finite(amount)
        }
    }

    pub fn amount(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `min(B, x)`; an infinite budget never caps.
    pub fn cap(self, x: f64) -> f64 {
        x.min(self.0)
    }
}

impl Eq for Budget {}

impl PartialOrd for Budget {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Budget {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Writes non-finite numbers as the strings `"inf"`, `"-inf"` and `"nan"`,
/// which JSON cannot represent as numbers.
pub fn serialize_extended_f64<S: Serializer>(x: &f64, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        serializer.serialize_f64(*x)
    } else if x.is_nan() {
        serializer.serialize_str("nan")
    } else if *x > 0.0 {
        serializer.serialize_str("inf")
    } else {
        serializer.serialize_str("-inf")
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct BudgetVisitor;

        impl Visitor<'_> for BudgetVisitor {
            type Value = Budget;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Budget, E> {
                Budget::finite(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Budget, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Budget, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Budget, E> {
                if v == "inf" {
                    Ok(Budget::INFINITE)
                } else {
                    Err(E::custom(format!("unknown budget literal {v:?}")))
                }
            }
        }

        deserializer.deserialize_any(BudgetVisitor)
    }
}

/// A game: per-bidder budgets and an `n x |Q|` value matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    budgets: Vec<Budget>,
    values: Vec<Vec<f64>>,
}

impl Instance {
    pub fn new(budgets: Vec<Budget>, values: Vec<Vec<f64>>) -> Result<Self> {
        if budgets.is_empty() {
            return Err(Error::InvalidInstance("at least one bidder required".into()));
        }
        if values.len() != budgets.len() {
            return Err(Error::DimensionMismatch {
                what: "value rows",
                expected: budgets.len(),
                found: values.len(),
            });
        }
        let num_queries = values[0].len();
        if num_queries == 0 {
            return Err(Error::InvalidInstance("at least one query required".into()));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != num_queries {
                return Err(Error::DimensionMismatch {
                    what: "value columns",
                    expected: num_queries,
                    found: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidInstance(format!(
                    "value of bidder {i} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self { budgets, values })
    }

    /// Convenience constructor: `f64::INFINITY` marks an unlimited budget.
    pub fn from_raw(budgets: &[f64], values: Vec<Vec<f64>>) -> Result<Self> {
        let budgets = budgets.iter().map(|&b| Budget::new(b)).collect::<Result<Vec<_>>>()?;
        Self::new(budgets, values)
    }

    pub fn num_bidders(&self) -> usize {
        self.budgets.len()
    }

    pub fn num_queries(&self) -> usize {
        self.values[0].len()
    }

    pub fn budget(&self, bidder: usize) -> Budget {
        self.budgets[bidder]
    }

    pub fn budgets(&self) -> &[Budget] {
        &self.budgets
    }

    pub fn value(&self, bidder: usize, query: usize) -> f64 {
        self.values[bidder][query]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `sum_i min(B_i, sum_j v_ij)`: an upper bound on any allocation's liquid welfare.
    pub fn welfare_cap(&self) -> f64 {
        self.budgets
            .iter()
            .zip(&self.values)
            .map(|(b, row)| b.cap(row.iter().sum()))
            .sum()
    }

    /// Default equilibrium epsilon, scaled to the instance.
    pub fn default_epsilon(&self) -> f64 {
        tolerance::EQUILIBRIUM_REL * self.welfare_cap()
    }

    /// True when `v_ij <= B_i` for every bidder and query.
    pub fn values_within_budgets(&self) -> bool {
        self.budgets
            .iter()
            .zip(&self.values)
            .all(|(b, row)| row.iter().all(|&v| v <= b.amount()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            budgets: Vec<Budget>,
            values: Vec<Vec<f64>>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::new(doc.budgets, doc.values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    pub(crate) fn check_bidder(&self, bidder: usize) -> Result<()> {
        if bidder < self.num_bidders() {
            Ok(())
        } else {
            Err(Error::BadIndex {
                index: bidder,
                len: self.num_bidders(),
            })
        }
    }

    pub(crate) fn check_matrix(&self, what: &'static str, m: &[Vec<f64>]) -> Result<()> {
        if m.len() != self.num_bidders() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.num_bidders(),
                found: m.len(),
            });
        }
        for row in m {
            if row.len() != self.num_queries() {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: self.num_queries(),
                    found: row.len(),
                });
            }
        }
        Ok(())
    }
}

/// How a bid matrix was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BidMode {
    PerQuery,
    /// `b_ij = m_i * v_ij` for one multiplier per bidder.
    Uniform {
        multipliers: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile {
    bids: Vec<Vec<f64>>,
    mode: BidMode,
}

impl BidProfile {
    pub fn per_query(bids: Vec<Vec<f64>>) -> Result<Self> {
        if bids.is_empty() || bids[0].is_empty() {
            return Err(Error::InvalidBids("empty bid matrix".into()));
        }
        let q = bids[0].len();
        for row in &bids {
            if row.len() != q {
                return Err(Error::DimensionMismatch {
                    what: "bid columns",
                    expected: q,
                    found: row.len(),
                });
            }
            if let Some(b) = row.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
                return Err(Error::InvalidBids(format!(
                    "bids must be finite and nonnegative, got {b}"
                )));
            }
        }
        Ok(Self {
            bids,
            mode: BidMode::PerQuery,
        })
    }

    pub fn zeros(num_bidders: usize, num_queries: usize) -> Self {
        Self {
            bids: vec![vec![0.0; num_queries]; num_bidders],
            mode: BidMode::PerQuery,
        }
    }

    pub fn uniform(instance: &Instance, multipliers: Vec<f64>) -> Result<Self> {
        if multipliers.len() != instance.num_bidders() {
            return Err(Error::DimensionMismatch {
                what: "multipliers",
                expected: instance.num_bidders(),
                found: multipliers.len(),
            });
        }
        if let Some(m) = multipliers.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidBids(format!(
                "multipliers must be finite and nonnegative, got {m}"
            )));
        }
        let bids = instance
            .values()
            .iter()
            .zip(&multipliers)
            .map(|(row, m)| row.iter().map(|v| m * v).collect())
            .collect();
        Ok(Self {
            bids,
            mode: BidMode::Uniform { multipliers },
        })
    }

    pub fn bids(&self) -> &[Vec<f64>] {
        &self.bids
    }

    pub fn bid(&self, bidder: usize, query: usize) -> f64 {
        self.bids[bidder][query]
    }

    pub fn row(&self, bidder: usize) -> &[f64] {
        &self.bids[bidder]
    }

    pub fn mode(&self) -> &BidMode {
        &self.mode
    }

    pub fn multipliers(&self) -> Option<&[f64]> {
        match &self.mode {
            BidMode::Uniform { multipliers } => Some(multipliers),
            BidMode::PerQuery => None,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.mode, BidMode::Uniform { .. })
    }

    /// Replaces one bidder's bids; the result is always per-query.
    pub fn with_row(&self, bidder: usize, row: Vec<f64>) -> Self {
        let mut bids = self.bids.clone();
        bids[bidder] = row;
        Self {
            bids,
            mode: BidMode::PerQuery,
        }
    }

    /// Replaces one bidder's multiplier, keeping uniform mode.
    pub fn with_multiplier(&self, instance: &Instance, bidder: usize, m: f64) -> Result<Self> {
        let mut multipliers = self
            .multipliers()
            .ok_or_else(|| Error::Unsupported("profile is not in uniform mode".into()))?
            .to_vec();
        multipliers[bidder] = m;
        Self::uniform(instance, multipliers)
    }

    /// Validates dimensions and, in uniform mode, the multiplier product.
    pub fn check_against(&self, instance: &Instance) -> Result<()> {
        instance.check_matrix("bids", &self.bids)?;
        if let BidMode::Uniform { multipliers } = &self.mode {
            if multipliers.len() != instance.num_bidders() {
                return Err(Error::DimensionMismatch {
                    what: "multipliers",
                    expected: instance.num_bidders(),
                    found: multipliers.len(),
                });
            }
            for (i, m) in multipliers.iter().enumerate() {
                for j in 0..instance.num_queries() {
                    if (self.bids[i][j] - m * instance.value(i, j)).abs() > tolerance::UNIFORM_BIDS {
                        return Err(Error::InvalidBids(format!(
                            "uniform bid of bidder {i} on query {j} does not match its multiplier"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, instance: &Instance) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
        enum Doc {
            PerQuery { bids: Vec<Vec<f64>> },
            Uniform { multipliers: Vec<f64> },
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let profile = match doc {
            Doc::PerQuery { bids } => Self::per_query(bids)?,
            Doc::Uniform { multipliers } => Self::uniform(instance, multipliers)?,
        };
        profile.check_against(instance)?;
        Ok(profile)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        match &self.mode {
            BidMode::PerQuery => serde_json::json!({"mode": "per_query", "bids": self.bids}),
            BidMode::Uniform { multipliers } => {
                serde_json::json!({"mode": "uniform", "multipliers": multipliers})
            }
        }
    }
}

impl Serialize for BidProfile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_value().serialize(serializer)
    }
}

/// Win probabilities `pi_ij`, feasible per query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pi: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn new(pi: Vec<Vec<f64>>) -> Result<Self> {
        if pi.is_empty() || pi[0].is_empty() {
            return Err(Error::InvalidAllocation("empty allocation".into()));
        }
        let q = pi[0].len();
        for row in &pi {
            if row.len() != q {
                return Err(Error::DimensionMismatch {
                    what: "allocation columns",
                    expected: q,
                    found: row.len(),
                });
            }
            if let Some(p) = row.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
                return Err(Error::InvalidAllocation(format!("probability outside [0, 1]: {p}")));
            }
        }
        for j in 0..q {
            let total: f64 = pi.iter().map(|row| row[j]).sum();
            if total > 1.0 + tolerance::ALLOCATION_SUM {
                return Err(Error::InvalidAllocation(format!(
                    "query {j} is over-allocated: total probability {total}"
                )));
            }
        }
        Ok(Self { pi })
    }

    pub fn zeros(num_bidders: usize, num_queries: usize) -> Self {
        Self {
            pi: vec![vec![0.0; num_queries]; num_bidders],
        }
    }

    pub fn pi(&self) -> &[Vec<f64>] {
        &self.pi
    }

    pub fn prob(&self, bidder: usize, query: usize) -> f64 {
        self.pi[bidder][query]
    }

    pub fn num_bidders(&self) -> usize {
        self.pi.len()
    }

    pub fn num_queries(&self) -> usize {
        self.pi[0].len()
    }

    /// `sum_j pi_ij v_ij`.
    pub fn value_of(&self, instance: &Instance, bidder: usize) -> f64 {
        self.pi[bidder]
            .iter()
            .zip(instance.values()[bidder].iter())
            .map(|(p, v)| p * v)
            .sum()
    }
}

/// An allocation with expected per-query payments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    allocation: Allocation,
    expected_payment: Vec<Vec<f64>>,
    bidder_values: Vec<f64>,
}

impl Outcome {
    pub fn new(instance: &Instance, allocation: Allocation, expected_payment: Vec<Vec<f64>>) -> Result<Self> {
        instance.check_matrix("allocation", &allocation.pi)?;
        instance.check_matrix("payments", &expected_payment)?;
        for (prow, crow) in allocation.pi.iter().zip(&expected_payment) {
            for (p, c) in prow.iter().zip(crow) {
                if !(*c >= 0.0) || (*p == 0.0 && *c != 0.0) {
                    return Err(Error::InvalidAllocation(format!(
                        "expected payment {c} inconsistent with win probability {p}"
                    )));
                }
            }
        }
        let bidder_values = (0..instance.num_bidders())
            .map(|i| allocation.value_of(instance, i))
            .collect();
        Ok(Self {
            allocation,
            expected_payment,
            bidder_values,
        })
    }

    pub fn allocation(&self) -> &Allocation {
        &self.allocation
    }

    pub fn expected_payment(&self) -> &[Vec<f64>] {
        &self.expected_payment
    }

    pub fn spend_of_query(&self, query: usize) -> f64 {
        self.expected_payment.iter().map(|row| row[query]).sum()
    }

    pub fn spend_of_bidder(&self, bidder: usize) -> f64 {
        self.expected_payment[bidder].iter().sum()
    }

    /// `V^Eq_i = sum_j pi_ij v_ij`.
    pub fn value_of_bidder(&self, bidder: usize) -> f64 {
        self.bidder_values[bidder]
    }

    pub fn total_spend(&self) -> f64 {
        self.expected_payment.iter().flatten().sum()
    }
}

/// `LW(pi) = sum_i min(B_i, sum_j pi_ij v_ij)`.
pub fn liquid_welfare(instance: &Instance, allocation: &Allocation) -> Result<f64> {
    instance.check_matrix("allocation", &allocation.pi)?;
    Ok((0..instance.num_bidders())
        .map(|i| instance.budget(i).cap(allocation.value_of(instance, i)))
        .sum())
}

/// Liquid welfare restricted to a set of bidders.
pub fn liquid_welfare_of_subset(instance: &Instance, allocation: &Allocation, bidders: &[usize]) -> Result<f64> {
    instance.check_matrix("allocation", &allocation.pi)?;
    let mut total = 0.0;
    for &i in bidders {
        instance.check_bidder(i)?;
        total += instance.budget(i).cap(allocation.value_of(instance, i));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gap(n: usize) -> Instance {
        Instance::from_raw(&vec![1.0; n], vec![vec![n as f64]; n]).unwrap()
    }

    #[test]
    fn equal_split_on_gap_instance_has_welfare_n() {
        let inst = gap(3);
        let alloc = Allocation::new(vec![vec![1.0 / 3.0]; 3]).unwrap();
        assert!((liquid_welfare(&inst, &alloc).unwrap() - 3.0).abs() < 1e-12);
        assert!((liquid_welfare_of_subset(&inst, &alloc, &[0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(liquid_welfare_of_subset(&inst, &alloc, &[]).unwrap(), 0.0);
        let all = liquid_welfare_of_subset(&inst, &alloc, &[0, 1, 2]).unwrap();
        assert_eq!(all, liquid_welfare(&inst, &alloc).unwrap());
    }

    #[test]
    fn zero_allocation_and_budget_cap() {
        let inst = gap(4);
        assert_eq!(liquid_welfare(&inst, &Allocation::zeros(4, 1)).unwrap(), 0.0);
        let single = Instance::from_raw(&[1.0], vec![vec![2.0]]).unwrap();
        let full = Allocation::new(vec![vec![1.0]]).unwrap();
        assert_eq!(liquid_welfare(&single, &full).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_and_bad_index() {
        let inst = gap(2);
        let wrong = Allocation::zeros(3, 1);
        assert!(matches!(
            liquid_welfare(&inst, &wrong),
            Err(Error::DimensionMismatch { .. })
        ));
        let ok = Allocation::zeros(2, 1);
        assert!(matches!(
            liquid_welfare_of_subset(&inst, &ok, &[5]),
            Err(Error::BadIndex { index: 5, len: 2 })
        ));
    }

    #[test]
    fn json_examples() {
        let inst = Instance::from_json(r#"{"budgets":[1,1],"values":[[2],[2]]}"#).unwrap();
        assert_eq!(inst.num_bidders(), 2);
        assert_eq!(inst.num_queries(), 1);
        assert_eq!(inst.value(1, 0), 2.0);

        let inf = Instance::from_json(r#"{"budgets":["inf"],"values":[[1,1]]}"#).unwrap();
        assert!(inf.budget(0).is_infinite());
        assert_eq!(inf.to_json(), r#"{"budgets":["inf"],"values":[[1.0,1.0]]}"#);

        assert!(Instance::from_json(r#"{"budgets":[1],"values":[[-1]]}"#).is_err());
        assert!(Instance::from_json(r#"{"budgets":[1],"values":[["x"]]}"#).is_err());
        assert!(Instance::from_json(r#"{"budgets":[0],"values":[[1]]}"#).is_err());
        assert!(Instance::from_json(r#"{"budgets":[1],"values":[]}"#).is_err());
        assert!(Instance::from_json(r#"{"budgets":[1,1],"values":[[1],[1,2]]}"#).is_err());
    }

    #[test]
    fn bid_profile_json() {
        let inst = Instance::from_raw(&[1.0, f64::INFINITY], vec![vec![2.0, 4.0], vec![1.0, 0.0]]).unwrap();
        let uni = BidProfile::from_json(r#"{"mode":"uniform","multipliers":[0.5,1]}"#, &inst).unwrap();
        assert_eq!(uni.bids(), &[vec![1.0, 2.0], vec![1.0, 0.0]]);
        assert_eq!(
            BidProfile::from_json(&uni.to_json_value().to_string(), &inst).unwrap(),
            uni
        );
        let pq = BidProfile::from_json(r#"{"mode":"per_query","bids":[[1,0],[0,3]]}"#, &inst).unwrap();
        assert!(!pq.is_uniform());
        assert!(BidProfile::from_json(r#"{"mode":"per_query","bids":[[1,0]]}"#, &inst).is_err());
        assert!(BidProfile::from_json(r#"{"mode":"per_query","bids":[[1,-1],[0,0]]}"#, &inst).is_err());
    }

    #[test]
    fn allocation_feasibility_enforced() {
        assert!(Allocation::new(vec![vec![0.6], vec![0.5]]).is_err());
        assert!(Allocation::new(vec![vec![1.2]]).is_err());
        assert!(Allocation::new(vec![vec![0.5], vec![0.5]]).is_ok());
    }

    #[test]
    fn budget_ordering_is_total() {
        let mut b = [
            Budget::INFINITE,
            Budget::finite(2.0).unwrap(),
            Budget::finite(1.0).unwrap(),
        ];
        b.sort();
        assert_eq!(b[0].amount(), 1.0);
        assert!(b[2].is_infinite());
        assert_eq!(Budget::INFINITE.cap(7.0), 7.0);
    }
}
