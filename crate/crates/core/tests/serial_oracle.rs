//! Spreadsheet serials against a day counter that walks the calendar by hand.

use linelist_core::date::{date_to_serial, excel_serial_to_date};

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn month_len(y: i64, m: i64) -> i64 {
    match m {
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => 31,
    }
}

/// Counts forward from 1899-12-30 (serial 0) one day at a time. Agrees with
/// spreadsheets from serial 61 on, past their phantom 1900-02-29.
fn oracle(serial: i64) -> (i64, i64, i64) {
    let (mut y, mut m, mut d) = (1899, 12, 30);
    for _ in 0..serial {
        d += 1;
        if d > month_len(y, m) {
            d = 1;
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
    }
    (y, m, d)
}

#[test]
fn serials_match_day_count_oracle() {
    // Incremental walk, equivalent to calling `oracle` for every serial.
    let mut expected = oracle(42005);
    assert_eq!(expected, (2015, 1, 1));
    let mut mismatches = 0;
    for serial in 42005..=43830 {
        let got = excel_serial_to_date(serial).unwrap();
        let got = (got.format("%Y").to_string().parse::<i64>().unwrap(),
                   got.format("%m").to_string().parse::<i64>().unwrap(),
                   got.format("%d").to_string().parse::<i64>().unwrap());
        if got != expected {
            mismatches += 1;
        }
        let (y, m, d) = expected;
        expected = if d < month_len(y, m) {
            (y, m, d + 1)
        } else if m < 12 {
            (y, m + 1, 1)
        } else {
            (y + 1, 1, 1)
        };
    }
    assert_eq!(mismatches, 0);
    assert_eq!(oracle(43830), (2019, 12, 31));
}

#[test]
fn known_anchors() {
    for (serial, ymd) in [(61, (1900, 3, 1)), (43466, (2019, 1, 1)), (43830, (2019, 12, 31)), (44000, (2020, 6, 18))] {
        assert_eq!(oracle(serial), ymd);
        let d = excel_serial_to_date(serial).unwrap();
        assert_eq!(d.format("%Y-%m-%d").to_string(), format!("{:04}-{:02}-{:02}", ymd.0, ymd.1, ymd.2));
        assert_eq!(date_to_serial(d), serial);
    }
}

#[test]
fn serials_before_the_phantom_leap_day_rejected() {
    for serial in [-5, 0, 1, 59, 60] {
        assert!(excel_serial_to_date(serial).is_err(), "{serial}");
    }
}
