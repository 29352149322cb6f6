use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Wiring of the network: the full model, its three ablations, and the two
/// baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "CMTN")]
    Cmtn,
    /// Shared affine projection instead of per-domain extractors.
    #[serde(rename = "CMTN_NDE")]
    CmtnNde,
    /// No temporal attention; heads read `h_N` only.
    #[serde(rename = "CMTN_NGA")]
    CmtnNga,
    /// No dynamic attention; the LSTM reads `f_t` directly.
    #[serde(rename = "CMTN_NLA")]
    CmtnNla,
    /// LSTM on raw readings with an adversarial domain head on `h_N`.
    #[serde(rename = "BASE_DANN")]
    BaseDann,
    /// LSTM on raw readings trained on source only.
    #[serde(rename = "LSTM_S2T")]
    LstmS2t,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Cmtn,
        Variant::CmtnNde,
        Variant::CmtnNga,
        Variant::CmtnNla,
        Variant::BaseDann,
        Variant::LstmS2t,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cmtn => "CMTN",
            Variant::CmtnNde => "CMTN_NDE",
            Variant::CmtnNga => "CMTN_NGA",
            Variant::CmtnNla => "CMTN_NLA",
            Variant::BaseDann => "BASE_DANN",
            Variant::LstmS2t => "LSTM_S2T",
        }
    }

    /// Any input transform ahead of the LSTM.
    pub fn has_extractor(self) -> bool {
        !matches!(self, Variant::BaseDann | Variant::LstmS2t)
    }

    /// Separate source and target extractors.
    pub fn has_domain_extractors(self) -> bool {
        matches!(self, Variant::Cmtn | Variant::CmtnNga | Variant::CmtnNla)
    }

    pub fn has_dynamic_attention(self) -> bool {
        matches!(self, Variant::Cmtn | Variant::CmtnNde | Variant::CmtnNga)
    }

    pub fn has_temporal_attention(self) -> bool {
        matches!(self, Variant::Cmtn | Variant::CmtnNde | Variant::CmtnNla)
    }

    pub fn is_adversarial(self) -> bool {
        self != Variant::LstmS2t
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm || (norm == "GANIN" && *v == Variant::BaseDann))
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}
