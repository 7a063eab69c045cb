//! RFC 3339 conversion for [`Timestamp`].

use chrono::{DateTime, SecondsFormat, Utc};
use groundmem_core::Timestamp;

/// Base instant for fixture timestamps: 2024-01-01T00:00:00Z.
pub const FIXTURE_EPOCH: Timestamp = Timestamp(1_704_067_200);

pub fn to_rfc3339(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t.0, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.0.to_string())
}

pub fn parse_rfc3339(s: &str) -> Option<Timestamp> {
    DateTime::parse_from_rfc3339(s).ok().map(|d| Timestamp(d.timestamp()))
}

pub fn now() -> Timestamp {
    Timestamp(Utc::now().timestamp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_renders() {
        assert_eq!(to_rfc3339(FIXTURE_EPOCH), "2024-01-01T00:00:00Z");
        assert_eq!(to_rfc3339(Timestamp(0)), "1970-01-01T00:00:00Z");
    }

    #[test]
    fn round_trip_and_offsets() {
        let t = Timestamp(1_704_067_200 + 3 * 3600 + 7);
        assert_eq!(parse_rfc3339(&to_rfc3339(t)), Some(t));
        assert_eq!(parse_rfc3339("2024-01-01T01:00:00+01:00"), Some(FIXTURE_EPOCH));
        assert_eq!(parse_rfc3339("yesterday"), None);
    }
}
