//! Effective prices per million total tokens.
//!
//! An anchor model's input and output prices are blended by the observed
//! input-to-output token ratio; other agents are priced by linear scaling in
//! parameter count. The rounded schedule is what enters scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceAnchor {
    pub anchor_params: u64,
    /// Currency per million input tokens.
    pub input_price: f64,
    /// Currency per million output tokens.
    pub output_price: f64,
    /// Input : output token ratio.
    pub io_ratio: (u32, u32),
    /// Advertised blended rate that the schedule scales from. When absent
    /// the blend of `input_price` and `output_price` is used unrounded.
    #[serde(default)]
    pub published_price: Option<f64>,
}

impl Default for PriceAnchor {
    /// A 32B-parameter anchor at 0.29 in / 0.59 out with a 4:1 token ratio,
    /// published as 0.36 per million total tokens.
    fn default() -> Self {
        PriceAnchor {
            anchor_params: 32_000_000_000,
            input_price: 0.29,
            output_price: 0.59,
            io_ratio: (4, 1),
            published_price: Some(0.36),
        }
    }
}

impl PriceAnchor {
    pub fn validate(&self) -> Result<()> {
        let ok = self.anchor_params > 0
            && self.input_price > 0.0
            && self.output_price > 0.0
            && self.io_ratio.0 > 0
            && self.io_ratio.1 > 0
            && self.published_price.is_none_or(|p| p > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid price anchor {self:?}")))
        }
    }
}

pub const DEFAULT_ROUNDING_PLACES: u32 = 2;

/// Token-weighted mean of the anchor's input and output prices.
///
/// For the default anchor this is `(4 * 0.29 + 0.59) / 5 = 0.35`.
pub fn anchor_price(anchor: &PriceAnchor) -> Result<f64> {
    anchor.validate()?;
    let (r_in, r_out) = (anchor.io_ratio.0 as f64, anchor.io_ratio.1 as f64);
    Ok((r_in * anchor.input_price + r_out * anchor.output_price) / (r_in + r_out))
}

/// Rounds half away from zero at `places` decimals, tolerant of binary
/// representation error (0.045 rounds to 0.05).
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    let scaled = x * scale;
    let nudge = 1e-9 * scaled.abs().max(1.0);
    (scaled.abs() + 0.5 + nudge).floor().copysign(scaled) / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedPrice {
    /// Unrounded linear-scaling price from the exact anchor blend.
    pub exact: f64,
    /// The published schedule value used for scoring.
    pub rounded: f64,
    /// True when the pool configured this price explicitly.
    pub explicit: bool,
}

/// One agent's pricing inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceInput<'a> {
    pub id: &'a str,
    pub params: u64,
    pub explicit_price: Option<f64>,
}

/// Prices every agent: `round(anchor * params / anchor_params)`, where
/// `anchor` is the published rate if configured and the blend otherwise.
/// Explicit prices override derivation.
pub fn derive_pool_prices<'a>(
    agents: impl IntoIterator<Item = PriceInput<'a>>,
    anchor: &PriceAnchor,
    places: u32,
) -> Result<BTreeMap<String, DerivedPrice>> {
    let base = match anchor.published_price {
        Some(p) => {
            anchor.validate()?;
            p
        }
        None => anchor_price(anchor)?,
    };
    let mut out = BTreeMap::new();
    for a in agents {
        if a.params == 0 {
            return Err(Error::NonPositiveParams(a.id.to_string()));
        }
        let ratio = a.params as f64 / anchor.anchor_params as f64;
        let price = match a.explicit_price {
            Some(p) if p > 0.0 => DerivedPrice {
                exact: p,
                rounded: p,
                explicit: true,
            },
            Some(p) => {
                return Err(Error::Invalid(format!(
                    "agent {} has non-positive price {p}",
                    a.id
                )))
            }
            None => DerivedPrice {
                exact: base * ratio,
                rounded: round_half_up(base * ratio, places),
                explicit: false,
            },
        };
        if price.rounded <= 0.0 {
            return Err(Error::Invalid(format!(
                "agent {} rounds to a zero price; use more decimal places",
                a.id
            )));
        }
        if out.insert(a.id.to_string(), price).is_some() {
            return Err(Error::DuplicateAgent(a.id.to_string()));
        }
    }
    Ok(out)
}
