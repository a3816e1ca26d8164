//! Event-log parsing for the two supported input formats.

use super::{CallType, IngestError, TransactionEvent};
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Jsonl,
    Csv,
}

/// Why a row was rejected. Carried verbatim into the rejects report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    UnknownCall,
    NegativeAmount,
    MissingField,
    Malformed,
}

/// One rejected input row; `row` is 1-based (header excluded for CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    /// Accepted events, sorted ascending by (timestamp, block_id).
    pub events: Vec<TransactionEvent>,
    pub rejects: Vec<RejectedRow>,
}

const COLUMNS: [&str; 7] = [
    "chain",
    "block_id",
    "wallet",
    "call",
    "amount",
    "coin",
    "timestamp",
];

/// Parse an event log. Malformed rows are collected into the rejects
/// report, never silently dropped; only stream-level failures are fatal.
pub fn parse_events<R: BufRead>(reader: R, format: LogFormat) -> Result<ParseOutcome, IngestError> {
    let mut out = match format {
        LogFormat::Jsonl => parse_jsonl(reader)?,
        LogFormat::Csv => parse_csv(reader)?,
    };
    out.events.sort_by_key(TransactionEvent::sort_key);
    Ok(out)
}

fn parse_jsonl<R: BufRead>(reader: R) -> Result<ParseOutcome, IngestError> {
    let mut out = ParseOutcome::default();
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_json_row(&line) {
            Ok(event) => out.events.push(event),
            Err((reason, detail)) => out.rejects.push(RejectedRow { row, reason, detail }),
        }
    }
    Ok(out)
}

type RowError = (RejectReason, String);

fn parse_json_row(line: &str) -> Result<TransactionEvent, RowError> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| (RejectReason::Malformed, format!("invalid json: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| (RejectReason::Malformed, "row is not a json object".into()))?;

    let field = |name: &str| -> Result<&serde_json::Value, RowError> {
        obj.get(name)
            .ok_or_else(|| (RejectReason::MissingField, name.to_string()))
    };
    let string_field = |name: &str| -> Result<String, RowError> {
        field(name)?
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| (RejectReason::Malformed, format!("`{name}` must be a string")))
    };

    let chain = string_field("chain")?;
    let wallet = string_field("wallet")?;
    let coin = string_field("coin")?;
    let block_id = field("block_id")?
        .as_u64()
        .ok_or_else(|| (RejectReason::Malformed, "`block_id` must be a non-negative integer".into()))?;

    let call_raw = string_field("call")?;
    let call = CallType::from_str(&call_raw).map_err(|_| (RejectReason::UnknownCall, call_raw))?;

    // Amounts arrive as decimal strings; bare numbers are tolerated.
    let amount_value = field("amount")?;
    let amount = match amount_value {
        serde_json::Value::String(s) => f64::from_str(s.trim())
            .map_err(|_| (RejectReason::Malformed, format!("unparseable amount `{s}`")))?,
        serde_json::Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| (RejectReason::Malformed, "non-finite amount".into()))?,
        _ => return Err((RejectReason::Malformed, "`amount` must be a decimal string".into())),
    };
    let amount = validate_amount(amount)?;

    let timestamp = field("timestamp")?
        .as_u64()
        .filter(|&t| t > 0)
        .ok_or_else(|| (RejectReason::Malformed, "`timestamp` must be a positive integer".into()))?;

    Ok(TransactionEvent {
        chain,
        block_id,
        wallet,
        call,
        amount,
        coin,
        timestamp,
    })
}

fn validate_amount(amount: f64) -> Result<f64, RowError> {
    if !amount.is_finite() {
        return Err((RejectReason::Malformed, "non-finite amount".into()));
    }
    if amount < 0.0 {
        return Err((RejectReason::NegativeAmount, format!("{amount}")));
    }
    Ok(amount)
}

fn parse_csv<R: BufRead>(reader: R) -> Result<ParseOutcome, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = csv_reader.headers()?.clone();
    let mut col = [0usize; 7];
    for (i, name) in COLUMNS.iter().enumerate() {
        col[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| IngestError::MissingHeader(name.to_string()))?;
    }

    let mut out = ParseOutcome::default();
    for (idx, record) in csv_reader.records().enumerate() {
        let row = idx + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(RejectedRow {
                    row,
                    reason: RejectReason::Malformed,
                    detail: format!("unreadable csv record: {e}"),
                });
                continue;
            }
        };
        match parse_csv_record(&record, &col) {
            Ok(event) => out.events.push(event),
            Err((reason, detail)) => out.rejects.push(RejectedRow { row, reason, detail }),
        }
    }
    Ok(out)
}

fn parse_csv_record(record: &csv::StringRecord, col: &[usize; 7]) -> Result<TransactionEvent, RowError> {
    let get = |i: usize| -> Result<&str, RowError> {
        record
            .get(col[i])
            .filter(|s| !s.is_empty())
            .ok_or_else(|| (RejectReason::MissingField, COLUMNS[i].to_string()))
    };

    let chain = get(0)?.to_string();
    let block_id = get(1)?
        .parse::<u64>()
        .map_err(|_| (RejectReason::Malformed, "`block_id` must be a non-negative integer".into()))?;
    let wallet = get(2)?.to_string();
    let call_raw = get(3)?;
    let call =
        CallType::from_str(call_raw).map_err(|_| (RejectReason::UnknownCall, call_raw.to_string()))?;
    let amount_raw = get(4)?;
    let amount = f64::from_str(amount_raw)
        .map_err(|_| (RejectReason::Malformed, format!("unparseable amount `{amount_raw}`")))?;
    let amount = validate_amount(amount)?;
    let coin = get(5)?.to_string();
    let timestamp = get(6)?
        .parse::<u64>()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| (RejectReason::Malformed, "`timestamp` must be a positive integer".into()))?;

    Ok(TransactionEvent {
        chain,
        block_id,
        wallet,
        call,
        amount,
        coin,
        timestamp,
    })
}

/// Canonical JSONL serialization; parsing its output reproduces the events
/// and re-serializing reproduces the bytes.
pub fn events_to_jsonl(events: &[TransactionEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("event serializes"));
        out.push('\n');
    }
    out
}
