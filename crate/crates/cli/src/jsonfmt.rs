//! JSON output with floats printed at 17 significant digits, enough to
//! round-trip any f64 exactly.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize a JSON value compactly with 17-significant-digit floats.
pub fn to_string_17(value: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser).expect("JSON value serializes");
    String::from_utf8(out).expect("serializer emits UTF-8")
}
