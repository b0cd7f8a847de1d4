//! UTC timestamp rendering. Every timestamp the tool emits goes through here.

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

/// ISO-8601 UTC with millisecond precision and a trailing `Z`,
/// e.g. `2015-02-05T08:28:26.032Z`.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.with_timezone(&Utc))
}

/// Truncates to whole milliseconds, the precision every stored timestamp carries.
pub fn truncate_millis(ts: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ts.timestamp_millis())
        .single()
        .unwrap_or(ts)
}

/// `h:mm:ss.ffffff`, the layout of the `Duration:` line.
pub fn format_duration(d: std::time::Duration) -> String {
    let total = d.as_secs();
    format!(
        "{}:{:02}:{:02}.{:06}",
        total / 3600,
        (total / 60) % 60,
        total % 60,
        d.subsec_micros()
    )
}
