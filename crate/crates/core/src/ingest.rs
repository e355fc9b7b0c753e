//! Transaction, CRM and label file parsing, and daily aggregation.
//!
//! Amounts are held as integer cents so that sums over a horizon are exact
//! and independent of record order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_HORIZON_DAYS: u32 = 180;
pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub const TRANSACTIONS_HEADER: [&str; 4] = ["customer_id", "date", "amount", "channel"];
pub const CRM_HEADER: [&str; 7] = [
    "customer_id",
    "age",
    "gender",
    "is_commercial",
    "risk_group",
    "occupation",
    "customer_age",
];
pub const LABELS_HEADER: [&str; 2] = ["customer_id", "label"];

/// Signed currency amount in cents. Incoming funds are positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Amount(i64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub fn from_cents(cents: i64) -> Self {
        Amount(cents)
    }

    /// Rounds to the nearest cent.
    pub fn from_units(units: f64) -> Self {
        Amount((units * 100.0).round() as i64)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn units(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Amount {
    type Err = String;

    /// Accepts an optional sign, digits, and at most two fractional digits.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (neg, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if int_part.is_empty() && frac_part.is_empty()
            || !digits(int_part)
            || !digits(frac_part)
            || frac_part.len() > 2
        {
            return Err(format!("invalid amount {s:?}"));
        }
        let int: i64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| format!("amount out of range {s:?}"))?
        };
        let frac: i64 = match frac_part.len() {
            0 => 0,
            1 => frac_part.parse::<i64>().unwrap() * 10,
            _ => frac_part.parse().unwrap(),
        };
        let cents = int
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac))
            .ok_or_else(|| format!("amount out of range {s:?}"))?;
        Ok(Amount(if neg { -cents } else { cents }))
    }
}

/// A contiguous range of calendar days starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub start: NaiveDate,
    pub days: u32,
}

impl Horizon {
    pub fn new(start: NaiveDate, days: u32) -> Self {
        Horizon { start, days }
    }

    pub fn len(&self) -> usize {
        self.days as usize
    }

    pub fn is_empty(&self) -> bool {
        self.days == 0
    }

    /// Zero-based day index of `date`, if it falls inside the horizon.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = date.signed_duration_since(self.start).num_days();
        (0..self.days as i64)
            .contains(&offset)
            .then_some(offset as usize)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.index_of(date).is_some()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + Days::new(index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub customer_id: String,
    pub date: NaiveDate,
    pub amount: Amount,
    pub channel: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedTransactions {
    pub records: Vec<TransactionRecord>,
    /// Well-formed rows dated outside the horizon.
    pub dropped_outside_horizon: usize,
}

/// One customer's signed daily net flows over the horizon.
///
/// `gross_incoming` and `gross_outgoing` are taken from the individual
/// records before netting, so same-day in/out flows do not cancel there.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionSeries {
    pub customer_id: String,
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
    pub gross_incoming: f64,
    pub gross_outgoing: f64,
}

impl TransactionSeries {
    /// Builds a series from already-netted daily values. Gross totals are
    /// derived from the netted values.
    pub fn from_values(customer_id: impl Into<String>, start_date: NaiveDate, values: Vec<f64>) -> Self {
        let gross_incoming = values.iter().filter(|v| **v > 0.0).sum();
        let gross_outgoing = values.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
        TransactionSeries {
            customer_id: customer_id.into(),
            start_date,
            values,
            gross_incoming,
            gross_outgoing,
        }
    }

    pub fn zeros(customer_id: impl Into<String>, horizon: &Horizon) -> Self {
        Self::from_values(customer_id, horizon.start, vec![0.0; horizon.len()])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmRecord {
    pub customer_id: String,
    pub age: f64,
    pub gender: String,
    pub is_commercial: bool,
    pub risk_group: String,
    pub occupation: String,
    pub customer_age: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CrmTable {
    pub records: BTreeMap<String, CrmRecord>,
    /// Rows with at least one empty field. They are skipped, not imputed.
    pub dropped_incomplete: usize,
}

fn parse_err(path: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(rdr)
}

fn check_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    expected: &[&str],
    name: &str,
) -> Result<()> {
    let header = rdr.headers()?;
    if header.is_empty() {
        // empty input
        return Ok(());
    }
    if header.iter().ne(expected.iter().copied()) {
        return Err(parse_err(
            name,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), header),
        ));
    }
    Ok(())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|_| format!("invalid date {s:?}"))
}

/// Parses a transactions CSV, keeping only rows inside `horizon`.
pub fn parse_transactions(path: &Path, horizon: &Horizon) -> Result<ParsedTransactions> {
    let file = open(path)?;
    parse_transactions_from(file, &path.display().to_string(), horizon)
}

pub fn parse_transactions_from<R: Read>(
    rdr: R,
    name: &str,
    horizon: &Horizon,
) -> Result<ParsedTransactions> {
    let mut out = ParsedTransactions::default();
    for row in read_transaction_rows(rdr, name)? {
        let rec = row?;
        if horizon.contains(rec.date) {
            out.records.push(rec);
        } else {
            out.dropped_outside_horizon += 1;
        }
    }
    Ok(out)
}

fn read_transaction_rows<R: Read>(
    rdr: R,
    name: &str,
) -> Result<impl Iterator<Item = Result<TransactionRecord>>> {
    let mut rdr = csv_reader(rdr);
    check_header(&mut rdr, &TRANSACTIONS_HEADER, name)?;
    let name = name.to_string();
    Ok(rdr.into_records().map(move |row| {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(&name, line, e.to_string())
        })?;
        let line = line_of(&row);
        if row.len() != TRANSACTIONS_HEADER.len() {
            return Err(parse_err(&name, line, "wrong number of fields"));
        }
        let customer_id = row[0].to_string();
        if customer_id.is_empty() {
            return Err(parse_err(&name, line, "empty customer_id"));
        }
        let date = parse_date(&row[1]).map_err(|m| parse_err(&name, line, m))?;
        let amount: Amount = row[2].parse().map_err(|m: String| parse_err(&name, line, m))?;
        if amount.is_zero() {
            return Err(parse_err(&name, line, "zero amount"));
        }
        Ok(TransactionRecord {
            customer_id,
            date,
            amount,
            channel: row[3].to_string(),
        })
    }))
}

/// Earliest transaction date in a transactions file, if any.
pub fn earliest_date(path: &Path) -> Result<Option<NaiveDate>> {
    let name = path.display().to_string();
    let mut earliest: Option<NaiveDate> = None;
    for row in read_transaction_rows(open(path)?, &name)? {
        let d = row?.date;
        earliest = Some(earliest.map_or(d, |e| e.min(d)));
    }
    Ok(earliest)
}

pub fn write_transactions<W: Write>(w: W, records: &[TransactionRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRANSACTIONS_HEADER)?;
    for r in records {
        wtr.write_record([
            r.customer_id.as_str(),
            &r.date.format(DATE_FORMAT).to_string(),
            &r.amount.to_string(),
            r.channel.as_str(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<transactions>", e))?;
    Ok(())
}

/// Aggregates records into one signed daily series per customer.
///
/// With `channel_filter` set, only records of that channel contribute.
/// Customers with no contributing records are absent from the result.
pub fn aggregate_daily(
    records: &[TransactionRecord],
    horizon: &Horizon,
    channel_filter: Option<&str>,
) -> Result<BTreeMap<String, TransactionSeries>> {
    if horizon.is_empty() {
        return Err(Error::EmptyHorizon);
    }
    struct Acc {
        daily: Vec<i64>,
        incoming: i64,
        outgoing: i64,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in records {
        if channel_filter.is_some_and(|c| c != r.channel) {
            continue;
        }
        let idx = horizon.index_of(r.date).ok_or_else(|| Error::OutsideHorizon {
            customer_id: r.customer_id.clone(),
            date: r.date.to_string(),
        })?;
        let a = acc.entry(r.customer_id.as_str()).or_insert_with(|| Acc {
            daily: vec![0; horizon.len()],
            incoming: 0,
            outgoing: 0,
        });
        let c = r.amount.cents();
        a.daily[idx] += c;
        if c > 0 {
            a.incoming += c;
        } else {
            a.outgoing -= c;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(id, a)| {
            let series = TransactionSeries {
                customer_id: id.to_string(),
                start_date: horizon.start,
                values: a.daily.iter().map(|&c| Amount(c).units()).collect(),
                gross_incoming: Amount(a.incoming).units(),
                gross_outgoing: Amount(a.outgoing).units(),
            };
            (id.to_string(), series)
        })
        .collect())
}

pub fn parse_crm(path: &Path) -> Result<CrmTable> {
    parse_crm_from(open(path)?, &path.display().to_string())
}

pub fn parse_crm_from<R: Read>(rdr: R, name: &str) -> Result<CrmTable> {
    let mut rdr = csv_reader(rdr);
    check_header(&mut rdr, &CRM_HEADER, name)?;
    let mut table = CrmTable::default();
    for row in rdr.records() {
        let row = row?;
        let line = line_of(&row);
        if row.len() != CRM_HEADER.len() {
            return Err(parse_err(name, line, "wrong number of fields"));
        }
        if row.iter().any(str::is_empty) {
            table.dropped_incomplete += 1;
            continue;
        }
        let years = |s: &str, field: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                _ => Err(parse_err(name, line, format!("invalid {field} {s:?}"))),
            }
        };
        let is_commercial = match &row[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    name,
                    line,
                    format!("is_commercial must be 0 or 1, found {other:?}"),
                ))
            }
        };
        let rec = CrmRecord {
            customer_id: row[0].to_string(),
            age: years(&row[1], "age")?,
            gender: row[2].to_string(),
            is_commercial,
            risk_group: row[4].to_string(),
            occupation: row[5].to_string(),
            customer_age: years(&row[6], "customer_age")?,
        };
        if table.records.insert(rec.customer_id.clone(), rec).is_some() {
            return Err(parse_err(name, line, "duplicate customer_id"));
        }
    }
    Ok(table)
}

pub fn write_crm<W: Write>(w: W, records: &[CrmRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CRM_HEADER)?;
    for r in records {
        wtr.write_record([
            r.customer_id.as_str(),
            &r.age.to_string(),
            r.gender.as_str(),
            if r.is_commercial { "1" } else { "0" },
            r.risk_group.as_str(),
            r.occupation.as_str(),
            &r.customer_age.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<crm>", e))?;
    Ok(())
}

pub fn parse_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    parse_labels_from(open(path)?, &path.display().to_string())
}

pub fn parse_labels_from<R: Read>(rdr: R, name: &str) -> Result<BTreeMap<String, u8>> {
    let mut rdr = csv_reader(rdr);
    check_header(&mut rdr, &LABELS_HEADER, name)?;
    let mut labels = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = line_of(&row);
        if row.len() != 2 || row[0].is_empty() {
            return Err(parse_err(name, line, "malformed label row"));
        }
        let label = match &row[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(name, line, format!("label must be 0 or 1, found {other:?}"))),
        };
        if labels.insert(row[0].to_string(), label).is_some() {
            return Err(parse_err(name, line, "duplicate customer_id"));
        }
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(w: W, labels: &[(String, u8)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(LABELS_HEADER)?;
    for (id, label) in labels {
        wtr.write_record([id.as_str(), if *label == 1 { "1" } else { "0" }])?;
    }
    wtr.flush().map_err(|e| Error::io("<labels>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn horizon30() -> Horizon {
        Horizon::new(d("2019-03-01"), 30)
    }

    fn rec(id: &str, date: &str, cents: i64) -> TransactionRecord {
        TransactionRecord {
            customer_id: id.into(),
            date: d(date),
            amount: Amount::from_cents(cents),
            channel: "BRANCH".into(),
        }
    }

    #[test]
    fn amount_parsing() {
        assert_eq!("2500.00".parse::<Amount>().unwrap().cents(), 250_000);
        assert_eq!("-40".parse::<Amount>().unwrap().cents(), -4000);
        assert_eq!("+0.5".parse::<Amount>().unwrap().cents(), 50);
        assert_eq!(".07".parse::<Amount>().unwrap().cents(), 7);
        for bad in ["abc", "", "-", "1.234", "1,5", "1e3", "."] {
            assert!(bad.parse::<Amount>().is_err(), "{bad}");
        }
        assert_eq!(Amount::from_cents(-5).to_string(), "-0.05");
        assert_eq!(Amount::from_cents(250_000).to_string(), "2500.00");
    }

    #[test]
    fn parses_single_row() {
        let csv = "customer_id,date,amount,channel\nC1,2019-03-15,2500.00,BRANCH\n";
        let p = parse_transactions_from(csv.as_bytes(), "t.csv", &horizon30()).unwrap();
        assert_eq!(p.records, vec![rec("C1", "2019-03-15", 250_000)]);
        assert_eq!(p.dropped_outside_horizon, 0);
    }

    #[test]
    fn malformed_amount_names_line() {
        let csv = "customer_id,date,amount,channel\nC1,2019-03-15,1.00,ATM\nC1,2019-03-16,abc,ATM\n";
        let err = parse_transactions_from(csv.as_bytes(), "t.csv", &horizon30()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_date_is_error() {
        let csv = "customer_id,date,amount,channel\nC1,2019-13-15,1.00,ATM\n";
        assert!(matches!(
            parse_transactions_from(csv.as_bytes(), "t.csv", &horizon30()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let p = parse_transactions_from("".as_bytes(), "t.csv", &horizon30()).unwrap();
        assert!(p.records.is_empty());
        let p = parse_transactions_from("customer_id,date,amount,channel\n".as_bytes(), "t.csv", &horizon30())
            .unwrap();
        assert!(p.records.is_empty());
    }

    #[test]
    fn out_of_horizon_rows_are_counted() {
        let csv = "customer_id,date,amount,channel\nC1,2019-02-28,1.00,ATM\nC1,2019-03-01,1.00,ATM\nC1,2019-03-31,1.00,ATM\n";
        let p = parse_transactions_from(csv.as_bytes(), "t.csv", &horizon30()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.dropped_outside_horizon, 2);
    }

    #[test]
    fn same_day_rows_kept_separately() {
        let csv = "customer_id,date,amount,channel\nC1,2019-03-04,100,ATM\nC1,2019-03-04,-40,ATM\n";
        let p = parse_transactions_from(csv.as_bytes(), "t.csv", &horizon30()).unwrap();
        assert_eq!(p.records.len(), 2);
    }

    #[test]
    fn single_transaction_series() {
        let m = aggregate_daily(&[rec("C1", "2019-03-15", 250_000)], &horizon30(), None).unwrap();
        let s = &m["C1"];
        assert_eq!(s.values.len(), 30);
        for (i, v) in s.values.iter().enumerate() {
            assert_eq!(*v, if i == 14 { 2500.0 } else { 0.0 });
        }
    }

    #[test]
    fn signed_sum_and_gross_totals() {
        let recs = [rec("C1", "2019-03-04", 10_000), rec("C1", "2019-03-04", -4_000)];
        let m = aggregate_daily(&recs, &horizon30(), None).unwrap();
        assert_eq!(m["C1"].values[3], 60.0);
        assert_eq!(m["C1"].gross_incoming, 100.0);
        assert_eq!(m["C1"].gross_outgoing, 40.0);
    }

    #[test]
    fn channel_filter_restricts() {
        let mut r2 = rec("C1", "2019-03-04", -4_000);
        r2.channel = "ATM".into();
        let recs = [rec("C1", "2019-03-04", 10_000), r2, rec("C2", "2019-03-05", 500)];
        let m = aggregate_daily(&recs, &horizon30(), Some("ATM")).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m["C1"].values[3], -40.0);
    }

    #[test]
    fn empty_horizon_is_error() {
        let h = Horizon::new(d("2019-03-01"), 0);
        assert!(matches!(aggregate_daily(&[], &h, None), Err(Error::EmptyHorizon)));
    }

    #[test]
    fn record_outside_horizon_is_error() {
        assert!(matches!(
            aggregate_daily(&[rec("C1", "2019-04-15", 1)], &horizon30(), None),
            Err(Error::OutsideHorizon { .. })
        ));
    }

    #[test]
    fn crm_parsing_drops_incomplete_rows() {
        let csv = "customer_id,age,gender,is_commercial,risk_group,occupation,customer_age\n\
                   C1,34,F,0,LOW,TEACHER,5\n\
                   C2,,M,1,HIGH,TRADER,2\n";
        let t = parse_crm_from(csv.as_bytes(), "crm.csv").unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.dropped_incomplete, 1);
        assert!(!t.records["C1"].is_commercial);

        let bad = "customer_id,age,gender,is_commercial,risk_group,occupation,customer_age\n\
                   C1,-3,F,0,LOW,TEACHER,5\n";
        assert!(parse_crm_from(bad.as_bytes(), "crm.csv").is_err());
        let bad = "customer_id,age,gender,is_commercial,risk_group,occupation,customer_age\n\
                   C1,3,F,yes,LOW,TEACHER,5\n";
        assert!(parse_crm_from(bad.as_bytes(), "crm.csv").is_err());
    }

    #[test]
    fn labels_must_be_binary() {
        let ok = "customer_id,label\nC1,1\nC2,0\n";
        let m = parse_labels_from(ok.as_bytes(), "labels.csv").unwrap();
        assert_eq!(m["C1"], 1);
        let bad = "customer_id,label\nC1,2\n";
        assert!(matches!(
            parse_labels_from(bad.as_bytes(), "labels.csv"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let csv = "id,date,amount,channel\nC1,2019-03-15,1,ATM\n";
        assert!(parse_transactions_from(csv.as_bytes(), "t.csv", &horizon30()).is_err());
    }
}
