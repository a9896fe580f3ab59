//! Text payloads carried by the recorder's control QR codes.
//!
//! Grammar: `PIAREC:<version>:<KIND>[:<profile_id>]`, where KIND is one of
//! `PROFILE`, `PLAY`, `STOP` and the profile id is present only for
//! `PROFILE`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAYLOAD_PREFIX: &str = "PIAREC";
pub const PAYLOAD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Profile,
    Play,
    Stop,
}

impl ControlKind {
    fn token(self) -> &'static str {
        match self {
            ControlKind::Profile => "PROFILE",
            ControlKind::Play => "PLAY",
            ControlKind::Stop => "STOP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlPayload {
    pub kind: ControlKind,
    pub profile_id: Option<String>,
    pub version: u32,
}

impl ControlPayload {
    pub fn profile(profile_id: impl Into<String>) -> Self {
        Self {
            kind: ControlKind::Profile,
            profile_id: Some(profile_id.into()),
            version: PAYLOAD_VERSION,
        }
    }

    pub fn play() -> Self {
        Self {
            kind: ControlKind::Play,
            profile_id: None,
            version: PAYLOAD_VERSION,
        }
    }

    pub fn stop() -> Self {
        Self {
            kind: ControlKind::Stop,
            profile_id: None,
            version: PAYLOAD_VERSION,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayloadError {
    #[error("invalid payload: {0}")]
    Invalid(String),
    #[error("malformed payload: bad {segment} segment {found:?}")]
    Malformed { segment: &'static str, found: String },
    #[error("unsupported payload version {0}")]
    UnsupportedVersion(u32),
}

pub fn encode_control_payload(p: &ControlPayload) -> Result<String, PayloadError> {
    if p.version != PAYLOAD_VERSION {
        return Err(PayloadError::UnsupportedVersion(p.version));
    }
    let mut out = format!("{PAYLOAD_PREFIX}:{}:{}", p.version, p.kind.token());
    match (p.kind, &p.profile_id) {
        (ControlKind::Profile, Some(id)) if !id.is_empty() => {
            out.push(':');
            out.push_str(id);
        }
        (ControlKind::Profile, _) => {
            return Err(PayloadError::Invalid("profile payload needs a profile id".into()))
        }
        (_, Some(_)) => {
            return Err(PayloadError::Invalid(format!(
                "{} payload must not carry a profile id",
                p.kind.token()
            )))
        }
        (_, None) => {}
    }
    Ok(out)
}

pub fn decode_control_payload(text: &str) -> Result<ControlPayload, PayloadError> {
    let malformed = |segment, found: &str| PayloadError::Malformed {
        segment,
        found: found.to_string(),
    };
    let mut parts = text.splitn(4, ':');
    let prefix = parts.next().unwrap_or_default();
    if prefix != PAYLOAD_PREFIX {
        return Err(malformed("prefix", prefix));
    }
    let version_text = parts.next().ok_or_else(|| malformed("version", ""))?;
    let version: u32 = version_text
        .parse()
        .map_err(|_| malformed("version", version_text))?;
    if version != PAYLOAD_VERSION {
        return Err(PayloadError::UnsupportedVersion(version));
    }
    let kind_text = parts.next().ok_or_else(|| malformed("kind", ""))?;
    let kind = match kind_text {
        "PROFILE" => ControlKind::Profile,
        "PLAY" => ControlKind::Play,
        "STOP" => ControlKind::Stop,
        other => return Err(malformed("kind", other)),
    };
    let profile_id = parts.next();
    match (kind, profile_id) {
        (ControlKind::Profile, Some(id)) if !id.is_empty() => Ok(ControlPayload {
            kind,
            profile_id: Some(id.to_string()),
            version,
        }),
        (ControlKind::Profile, other) => Err(malformed("profile_id", other.unwrap_or(""))),
        (_, Some(extra)) => Err(malformed("profile_id", extra)),
        (_, None) => Ok(ControlPayload {
            kind,
            profile_id: None,
            version,
        }),
    }
}

impl fmt::Display for ControlPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match encode_control_payload(self) {
            Ok(s) => f.write_str(&s),
            Err(e) => write!(f, "<{e}>"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_control_payload(&ControlPayload::profile("ab12")).unwrap(), "PIAREC:1:PROFILE:ab12");
        assert_eq!(encode_control_payload(&ControlPayload::play()).unwrap(), "PIAREC:1:PLAY");
        assert_eq!(encode_control_payload(&ControlPayload::stop()).unwrap(), "PIAREC:1:STOP");
    }

    #[test]
    fn profile_without_id_is_invalid() {
        let p = ControlPayload { profile_id: None, ..ControlPayload::profile("x") };
        assert!(matches!(encode_control_payload(&p), Err(PayloadError::Invalid(_))));
        let p = ControlPayload { profile_id: Some("x".into()), ..ControlPayload::play() };
        assert!(matches!(encode_control_payload(&p), Err(PayloadError::Invalid(_))));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_control_payload("PIAREC:1:STOP").unwrap(), ControlPayload::stop());
        assert_eq!(
            decode_control_payload("PIAREC:2:PLAY").unwrap_err(),
            PayloadError::UnsupportedVersion(2)
        );
        assert!(matches!(
            decode_control_payload("HELLO"),
            Err(PayloadError::Malformed { segment: "prefix", .. })
        ));
        assert!(matches!(
            decode_control_payload("PIAREC:x:PLAY"),
            Err(PayloadError::Malformed { segment: "version", .. })
        ));
        assert!(matches!(
            decode_control_payload("PIAREC:1:PAUSE"),
            Err(PayloadError::Malformed { segment: "kind", .. })
        ));
        assert!(matches!(
            decode_control_payload("PIAREC:1:PROFILE"),
            Err(PayloadError::Malformed { segment: "profile_id", .. })
        ));
        assert!(matches!(
            decode_control_payload("PIAREC:1:PLAY:abc"),
            Err(PayloadError::Malformed { segment: "profile_id", .. })
        ));
    }

    fn payloads() -> impl Strategy<Value = ControlPayload> {
        prop_oneof![
            "[A-Za-z0-9:_-]{1,24}".prop_map(ControlPayload::profile),
            Just(ControlPayload::play()),
            Just(ControlPayload::stop()),
        ]
    }

    proptest! {
        #[test]
        fn roundtrip(p in payloads()) {
            let text = encode_control_payload(&p).unwrap();
            prop_assert_eq!(decode_control_payload(&text).unwrap(), p);
        }
    }
}
