//! Server-side decision rules over the distilled scan payload.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardsynth::{LogoId, Media, Network, Side};
use crate::ocrdecode::{luhn_valid, Expiry};
use crate::pipeline::{mask_pan, Mode};

#[derive(Debug, Error)]
pub enum VerdictError {
    #[error("card number needs at least 6 digits, got {0:?}")]
    ShortPan(String),
    #[error("card number {0:?} contains non-digits")]
    NonDigit(String),
    #[error("card on record fails the Luhn check")]
    InvalidRecord,
    #[error("malformed payload at {path}: {message}")]
    Parse { path: String, message: String },
}

/// One logo seen during the completion loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamperObject {
    pub logo_id: LogoId,
    pub confidence: f64,
    /// Completion frames in which the logo was observed.
    pub frames: usize,
}

/// The distilled scan report. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPayload {
    pub session_id: String,
    /// Full or masked (`BIN******last4`) card number.
    pub final_pan: Option<String>,
    pub expiry: Option<Expiry>,
    pub sides_seen: BTreeSet<Side>,
    pub media_votes: BTreeMap<Media, usize>,
    pub tamper_objects: Vec<TamperObject>,
    pub frames_produced: usize,
    pub frames_processed: usize,
    pub fps: f64,
    pub duration_ms: f64,
    pub gave_up: bool,
    pub mode: Mode,
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCard {
    pub pan_on_record: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer_logo: Option<LogoId>,
}

impl ExpectedCard {
    pub fn validate(&self) -> Result<(), VerdictError> {
        match luhn_valid(&self.pan_on_record) {
            Ok(true) => Ok(()),
            Ok(false) => Err(VerdictError::InvalidRecord),
            Err(_) => Err(VerdictError::NonDigit(self.pan_on_record.clone())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RulesConfig {
    pub required_sides: BTreeSet<Side>,
    /// Frames a logo must appear in before it can count as tamper evidence.
    pub min_logo_frames: usize,
}

impl RulesConfig {
    pub fn new() -> Self {
        Self { required_sides: BTreeSet::new(), min_logo_frames: 2 }
    }

    pub fn requiring(sides: impl IntoIterator<Item = Side>) -> Self {
        Self { required_sides: sides.into_iter().collect(), ..Self::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Pass,
    Reject,
    Inconclusive,
}

impl Decision {
    /// CLI exit status for the decision.
    pub fn exit_code(self) -> i32 {
        match self {
            Decision::Pass => 0,
            Decision::Reject => 2,
            Decision::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    NoOcr,
    PanMismatch,
    FakeMedia,
    MediaTie,
    TamperInconsistent,
    MissingSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub rule: RuleId,
    /// Payload field that triggered the rule.
    pub field: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub reasons: Vec<Reason>,
}

impl Verdict {
    pub fn rules(&self) -> Vec<RuleId> {
        self.reasons.iter().map(|r| r.rule).collect()
    }
}

/// Card network from the leading digits.
pub fn bin_network(pan: &str) -> Result<Network, VerdictError> {
    let digits: String = pan.chars().take(6).collect();
    if digits.len() < 6 {
        return Err(VerdictError::ShortPan(pan.to_string()));
    }
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(VerdictError::NonDigit(pan.to_string()));
    }
    let p2: u32 = digits[..2].parse().unwrap();
    let p4: u32 = digits[..4].parse().unwrap();
    Ok(match () {
        _ if digits.starts_with('4') => Network::Visa,
        _ if (51..=55).contains(&p2) || (2221..=2720).contains(&p4) => Network::Mastercard,
        _ if p2 == 34 || p2 == 37 => Network::Amex,
        _ if p4 == 6011 || p2 == 65 => Network::Discover,
        _ => Network::Unknown,
    })
}

fn reason(rule: RuleId, field: &str, detail: String) -> Reason {
    Reason { rule, field: field.to_string(), detail }
}

/// Applies the rules in order: no read, card mismatch, fake media, logo
/// inconsistency, missing side. A reject stops evaluation; inconclusive
/// findings accumulate.
pub fn decide(payload: &ScanPayload, expected: &ExpectedCard, rules: &RulesConfig) -> Verdict {
    let reject = |r: Reason| Verdict { decision: Decision::Reject, reasons: vec![r] };
    let Some(pan) = payload.final_pan.as_deref() else {
        return Verdict {
            decision: Decision::Inconclusive,
            reasons: vec![reason(RuleId::NoOcr, "final_pan", "no card number was read".into())],
        };
    };

    // a masked read is compared against the masked record
    let record = if pan.contains('*') { mask_pan(&expected.pan_on_record) } else { expected.pan_on_record.clone() };
    if pan != record {
        return reject(reason(RuleId::PanMismatch, "final_pan", format!("read {} does not match the card on record", mask_pan(pan))));
    }

    let mut reasons = Vec::new();
    let top = payload.media_votes.values().copied().max().unwrap_or(0);
    let leaders: Vec<Media> = payload.media_votes.iter().filter(|(_, &n)| n == top && n > 0).map(|(m, _)| *m).collect();
    match leaders.as_slice() {
        [m] if m.is_fake() => {
            return reject(reason(RuleId::FakeMedia, "media_votes", format!("{m:?} has {top} votes").to_lowercase()));
        }
        [_, _, ..] if leaders.iter().any(|m| m.is_fake()) => {
            reasons.push(reason(RuleId::MediaTie, "media_votes", format!("tie at {top} votes")));
        }
        _ => {}
    }

    let network = bin_network(pan).unwrap_or(Network::Unknown);
    for obj in payload.tamper_objects.iter().filter(|o| o.frames >= rules.min_logo_frames) {
        let conflict = match obj.logo_id.network() {
            Some(n) => network != Network::Unknown && n != network,
            None => expected.issuer_logo.is_some_and(|issuer| issuer != obj.logo_id),
        };
        if conflict {
            return reject(reason(
                RuleId::TamperInconsistent,
                "tamper_objects",
                format!("{:?} logo in {} frames conflicts with {:?} card", obj.logo_id, obj.frames, network).to_lowercase(),
            ));
        }
    }

    for side in &rules.required_sides {
        if !payload.sides_seen.contains(side) {
            reasons.push(reason(RuleId::MissingSide, "sides_seen", format!("{side:?} side not scanned").to_lowercase()));
        }
    }

    let decision = if reasons.is_empty() { Decision::Pass } else { Decision::Inconclusive };
    Verdict { decision, reasons }
}

/// Canonical JSON: fixed field order, no insignificant whitespace.
pub fn serialize_payload(payload: &ScanPayload) -> Vec<u8> {
    serde_json::to_vec(payload).expect("payload serializes")
}

const PAYLOAD_FIELDS: [&str; 13] = [
    "session_id",
    "final_pan",
    "expiry",
    "sides_seen",
    "media_votes",
    "tamper_objects",
    "frames_produced",
    "frames_processed",
    "fps",
    "duration_ms",
    "gave_up",
    "mode",
    "profile",
];

/// Parses a payload. Unknown top-level fields are ignored and their count
/// logged; other problems report the offending field path.
pub fn parse_payload(bytes: &[u8]) -> Result<ScanPayload, VerdictError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| VerdictError::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;
    if let Some(obj) = value.as_object() {
        let unknown = obj.keys().filter(|k| !PAYLOAD_FIELDS.contains(&k.as_str())).count();
        if unknown > 0 {
            log::info!("payload has {unknown} unknown field(s); ignored");
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| VerdictError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn parse_expected(bytes: &[u8]) -> Result<ExpectedCard, VerdictError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let e: ExpectedCard = serde_path_to_error::deserialize(de).map_err(|e| VerdictError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    e.validate()?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VISA: &str = "4111111111111111";

    fn payload() -> ScanPayload {
        ScanPayload {
            session_id: "s001".into(),
            final_pan: Some(VISA.into()),
            expiry: None,
            sides_seen: [Side::Number].into_iter().collect(),
            media_votes: [(Media::Physical, 5)].into_iter().collect(),
            tamper_objects: vec![TamperObject { logo_id: LogoId::Visa, confidence: 0.9, frames: 5 }],
            frames_produced: 100,
            frames_processed: 40,
            fps: 10.0,
            duration_ms: 4000.0,
            gave_up: false,
            mode: Mode::Parallel,
            profile: "pixel-2-like".into(),
        }
    }

    fn expected() -> ExpectedCard {
        ExpectedCard { pan_on_record: VISA.into(), issuer_logo: None }
    }

    #[test]
    fn bin_table() {
        assert_eq!(bin_network("411111").unwrap(), Network::Visa);
        assert_eq!(bin_network("550000").unwrap(), Network::Mastercard);
        assert_eq!(bin_network("222100").unwrap(), Network::Mastercard);
        assert_eq!(bin_network("272099").unwrap(), Network::Mastercard);
        assert_eq!(bin_network("272100").unwrap(), Network::Unknown);
        assert_eq!(bin_network("378282").unwrap(), Network::Amex);
        assert_eq!(bin_network("601100").unwrap(), Network::Discover);
        assert_eq!(bin_network("650000").unwrap(), Network::Discover);
        assert_eq!(bin_network("999999").unwrap(), Network::Unknown);
        assert!(bin_network("4111").is_err());
    }

    #[test]
    fn clean_scan_passes() {
        let v = decide(&payload(), &expected(), &RulesConfig::new());
        assert_eq!(v, Verdict { decision: Decision::Pass, reasons: vec![] });
    }

    #[test]
    fn no_read_is_inconclusive() {
        let mut p = payload();
        p.final_pan = None;
        let v = decide(&p, &expected(), &RulesConfig::new());
        assert_eq!((v.decision, v.rules()), (Decision::Inconclusive, vec![RuleId::NoOcr]));
    }

    #[test]
    fn mismatch_rejects_masked_or_not() {
        let mut p = payload();
        p.final_pan = Some("4000000000000002".into());
        assert_eq!(decide(&p, &expected(), &RulesConfig::new()).rules(), vec![RuleId::PanMismatch]);
        p.final_pan = Some(mask_pan(VISA));
        assert_eq!(decide(&p, &expected(), &RulesConfig::new()).decision, Decision::Pass);
    }

    #[test]
    fn media_plurality() {
        let mut p = payload();
        p.media_votes = [(Media::Screen, 3), (Media::Physical, 2)].into_iter().collect();
        let v = decide(&p, &expected(), &RulesConfig::new());
        assert_eq!((v.decision, v.rules()), (Decision::Reject, vec![RuleId::FakeMedia]));
        assert_eq!(v.reasons[0].field, "media_votes");
        p.media_votes = [(Media::Screen, 2), (Media::Physical, 3)].into_iter().collect();
        assert_eq!(decide(&p, &expected(), &RulesConfig::new()).decision, Decision::Pass);
        p.media_votes = [(Media::Screen, 3), (Media::Physical, 3)].into_iter().collect();
        let v = decide(&p, &expected(), &RulesConfig::new());
        assert_eq!((v.decision, v.rules()), (Decision::Inconclusive, vec![RuleId::MediaTie]));
    }

    #[test]
    fn logo_conflicts() {
        let mut p = payload();
        p.tamper_objects.push(TamperObject { logo_id: LogoId::Mastercard, confidence: 0.9, frames: 2 });
        let v = decide(&p, &expected(), &RulesConfig::new());
        assert_eq!(v.rules(), vec![RuleId::TamperInconsistent]);
        assert_eq!(v.reasons[0].field, "tamper_objects");
        // one frame is not enough evidence
        p.tamper_objects[1].frames = 1;
        assert_eq!(decide(&p, &expected(), &RulesConfig::new()).decision, Decision::Pass);
        // bank logo checked only against a known issuer
        p.tamper_objects = vec![TamperObject { logo_id: LogoId::BankB, confidence: 0.9, frames: 3 }];
        assert_eq!(decide(&p, &expected(), &RulesConfig::new()).decision, Decision::Pass);
        let e = ExpectedCard { issuer_logo: Some(LogoId::BankA), ..expected() };
        assert_eq!(decide(&p, &e, &RulesConfig::new()).rules(), vec![RuleId::TamperInconsistent]);
    }

    #[test]
    fn missing_side() {
        let v = decide(&payload(), &expected(), &RulesConfig::requiring([Side::Number, Side::NonNumber]));
        assert_eq!((v.decision, v.rules()), (Decision::Inconclusive, vec![RuleId::MissingSide]));
    }

    #[test]
    fn payload_round_trip_and_errors() {
        let p = payload();
        let bytes = serialize_payload(&p);
        assert_eq!(parse_payload(&bytes).unwrap(), p);
        assert_eq!(serialize_payload(&parse_payload(&bytes).unwrap()), bytes);

        let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        v.as_object_mut().unwrap().insert("extra".into(), 1.into());
        assert_eq!(parse_payload(v.to_string().as_bytes()).unwrap(), p);

        v.as_object_mut().unwrap().remove("fps");
        let e = parse_payload(v.to_string().as_bytes()).unwrap_err().to_string();
        assert!(e.contains("fps"), "{e}");

        let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        v["tamper_objects"][0]["frames"] = "many".into();
        let e = parse_payload(v.to_string().as_bytes()).unwrap_err().to_string();
        assert!(e.contains("tamper_objects[0].frames"), "{e}");
    }
}
