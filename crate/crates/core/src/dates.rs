//! Day numbers: whole days since the dataset epoch 2020-01-01.

use chrono::NaiveDate;

pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid epoch")
}

/// Day number of `date`, or `None` when it does not fit the stored `u16`.
pub fn day_number(date: NaiveDate) -> Option<u16> {
    u16::try_from((date - epoch()).num_days()).ok()
}

pub fn date_of(day: u16) -> NaiveDate {
    epoch() + chrono::Days::new(day as u64)
}

/// Signed day offset, used where curves may be shifted before the epoch.
pub fn day_offset(date: NaiveDate) -> i64 {
    (date - epoch()).num_days()
}
