//! Float rendering shared by every writer: 17 significant digits.

use std::io;

use serde::{Serialize, Serializer};
use serde_json::ser::{Formatter, PrettyFormatter};

/// `x` with 17 significant digits; non-finite values become `NaN`/`inf`/`-inf`.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{:.16e}", x + 0.0)
    }
}

/// serde helper: finite floats as 17-digit JSON numbers, others as `null`.
pub fn ser17<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize;
    if x.is_finite() {
        let raw = serde_json::value::RawValue::from_string(format!("{:.16e}", x + 0.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    } else {
        s.serialize_none()
    }
}

/// Pretty JSON whose floats all carry 17 significant digits; non-finite floats become `null`.
pub fn to_json17<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Float17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

struct Float17<'a>(PrettyFormatter<'a>);

impl Formatter for Float17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{:.16e}", v + 0.0)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(f64::NAN), "NaN");
        assert_eq!(fmt17(-0.0), "0.0000000000000000e0");
    }

    #[test]
    fn json_floats_have_17_digits() {
        let text = to_json17(&serde_json::json!({"x": 0.1, "y": [1.0, f64::NAN]})).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(text.contains("null"));
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }
}
