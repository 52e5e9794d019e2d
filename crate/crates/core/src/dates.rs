//! Recognition of the three supported calendar-date spellings:
//! `YYYY-MM-DD`, `DD Month YYYY` and `Month DD, YYYY` (English month names,
//! any case).

use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

static ISO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{4})-(\d{2})-(\d{2})\b").unwrap());

static DAY_MONTH_YEAR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\b(\d{{1,2}})\s+({})\s+(\d{{4}})\b", MONTHS.join("|"))).unwrap());

static MONTH_DAY_YEAR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\b({})\s+(\d{{1,2}}),?\s+(\d{{4}})\b", MONTHS.join("|"))).unwrap());

fn month_number(name: &str) -> Option<u32> {
    let lower = name.to_ascii_lowercase();
    MONTHS.iter().position(|m| *m == lower).map(|i| i as u32 + 1)
}

/// Every valid date in `text` as (byte offset, date), in offset order.
fn candidates(text: &str) -> Vec<(usize, usize, NaiveDate)> {
    let mut out = Vec::new();
    for c in ISO.captures_iter(text) {
        let whole = c.get(0).unwrap();
        let (y, m, d) = (c[1].parse(), c[2].parse(), c[3].parse());
        if let (Ok(y), Ok(m), Ok(d)) = (y, m, d) {
            if let Some(date) = NaiveDate::from_ymd_opt(y, m, d) {
                out.push((whole.start(), whole.end(), date));
            }
        }
    }
    for c in DAY_MONTH_YEAR.captures_iter(text) {
        let whole = c.get(0).unwrap();
        if let (Ok(d), Some(m), Ok(y)) = (c[1].parse(), month_number(&c[2]), c[3].parse()) {
            if let Some(date) = NaiveDate::from_ymd_opt(y, m, d) {
                out.push((whole.start(), whole.end(), date));
            }
        }
    }
    for c in MONTH_DAY_YEAR.captures_iter(text) {
        let whole = c.get(0).unwrap();
        if let (Some(m), Ok(d), Ok(y)) = (month_number(&c[1]), c[2].parse(), c[3].parse()) {
            if let Some(date) = NaiveDate::from_ymd_opt(y, m, d) {
                out.push((whole.start(), whole.end(), date));
            }
        }
    }
    out.sort_by_key(|&(start, _, _)| start);
    out
}

/// The first recognizable date in `text`, if any.
pub fn find_first(text: &str) -> Option<NaiveDate> {
    candidates(text).first().map(|&(_, _, d)| d)
}

/// Parses `raw` only if the whole (trimmed) string is one date.
pub fn parse_exact(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    candidates(raw)
        .into_iter()
        .find(|&(start, end, _)| start == 0 && end == raw.len())
        .map(|(_, _, d)| d)
}

/// Formats as `DD Month YYYY` with a capitalized month name.
pub fn format_day_month_year(date: NaiveDate) -> String {
    date.format("%d %B %Y").to_string()
}
