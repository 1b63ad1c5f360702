use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Buy,
    Sell,
    Hold,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Buy => "buy",
            ActionKind::Sell => "sell",
            ActionKind::Hold => "hold",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buy" => Ok(ActionKind::Buy),
            "sell" => Ok(ActionKind::Sell),
            "hold" => Ok(ActionKind::Hold),
            other => Err(Error::Parse(format!("unknown action kind {other:?}"))),
        }
    }
}

/// One of the `3 * levels` agent actions. Level `k` trades `k / levels` of
/// the available cash (buy) or holdings (sell).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscreteAction {
    pub kind: ActionKind,
    pub level: usize,
}

impl DiscreteAction {
    /// `index / levels` picks buy, sell, hold; `index % levels + 1` the level.
    pub fn decode(index: usize, levels: usize) -> Result<Self> {
        if levels == 0 || index >= 3 * levels {
            return Err(Error::ActionOutOfRange(index));
        }
        let kind = match index / levels {
            0 => ActionKind::Buy,
            1 => ActionKind::Sell,
            _ => ActionKind::Hold,
        };
        Ok(Self {
            kind,
            level: index % levels + 1,
        })
    }

    pub fn encode(&self, levels: usize) -> usize {
        let base = match self.kind {
            ActionKind::Buy => 0,
            ActionKind::Sell => levels,
            ActionKind::Hold => 2 * levels,
        };
        base + self.level - 1
    }
}

/// An order in BTC, as issued by the rule-based strategies. Quantities are
/// rounded down to the lot grid and capped by what the portfolio can afford.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Hold,
    Buy(f64),
    Sell(f64),
    /// Spend all cash.
    BuyMax,
    /// Sell all holdings.
    SellAll,
}
