//! Fixed-width sensor message codec.
//!
//! A message is a single ASCII line with no delimiters:
//!
//! ```text
//! <MCU:1d><LOC:2d><SEN:3d><TYPE:2c><IND:1c><VALUE>
//!    1      01      001      TH       F      24.45
//! ```
//!
//! The identifier fields have distinct, fixed widths so the header can be
//! sliced without separators. `IND` is `F` for a decimal value rendered with
//! two fractional digits, or `I` for an integer. The BLE form is the byte
//! image of the same line, capped at a 20-byte characteristic payload.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the `MCU LOC SEN TYPE IND` header in bytes.
pub const HEADER_LEN: usize = 1 + 2 + 3 + 2 + 1;

/// Largest payload a default BLE characteristic carries.
pub const BLE_MAX_PAYLOAD: usize = 20;

pub const MAX_LOCATION_ID: u8 = 98;
pub const MAX_SENSOR_ID: u16 = 999;
pub const MAX_MCU_ID: u8 = 9;

/// Header field names reported by [`WireError`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Mcu,
    Location,
    Sensor,
    SensorType,
    Indicator,
    Value,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Field::Mcu => "mcu",
            Field::Location => "location",
            Field::Sensor => "sensor",
            Field::SensorType => "sensor_type",
            Field::Indicator => "indicator",
            Field::Value => "value",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("line of {len} bytes is too short for a header plus value (need > {HEADER_LEN})")]
    MalformedLength { len: usize },
    #[error("unknown sensor type code {0:?}")]
    UnknownSensorType(String),
    #[error("unknown value indicator {0:?} (expected 'F' or 'I')")]
    UnknownIndicator(char),
    #[error("field {field} is not numeric: {text:?}")]
    NonNumericValue { field: Field, text: String },
    #[error("location id {0} exceeds {MAX_LOCATION_ID}")]
    LocationOutOfRange(u32),
    #[error("non-ASCII byte 0x{byte:02X} at offset {offset}")]
    NonAsciiByte { offset: usize, byte: u8 },
    #[error("encoded payload of {len} bytes exceeds the {BLE_MAX_PAYLOAD}-byte BLE limit")]
    PayloadTooLong { len: usize },
    #[error("{field} id {value} out of range")]
    IdOutOfRange { field: Field, value: u32 },
    #[error("float value {0} is not finite")]
    NonFinite(f64),
}

impl WireError {
    /// Field that caused the error, when the error is tied to one.
    pub fn field(&self) -> Option<Field> {
        match self {
            WireError::UnknownSensorType(_) => Some(Field::SensorType),
            WireError::UnknownIndicator(_) => Some(Field::Indicator),
            WireError::NonNumericValue { field, .. } | WireError::IdOutOfRange { field, .. } => {
                Some(*field)
            }
            WireError::LocationOutOfRange(_) => Some(Field::Location),
            WireError::NonFinite(_) => Some(Field::Value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SensorType {
    /// Temperature.
    #[serde(rename = "TH")]
    Th,
    /// Humidity.
    #[serde(rename = "HU")]
    Hu,
    /// Air quality.
    #[serde(rename = "AQ")]
    Aq,
    /// Light.
    #[serde(rename = "LI")]
    Li,
    /// Sound.
    #[serde(rename = "SO")]
    So,
}

impl SensorType {
    pub const ALL: [SensorType; 5] = [
        SensorType::Th,
        SensorType::Hu,
        SensorType::Aq,
        SensorType::Li,
        SensorType::So,
    ];

    pub fn code(self) -> &'static str {
        match self {
            SensorType::Th => "TH",
            SensorType::Hu => "HU",
            SensorType::Aq => "AQ",
            SensorType::Li => "LI",
            SensorType::So => "SO",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SensorType::Th => "temperature",
            SensorType::Hu => "humidity",
            SensorType::Aq => "air quality",
            SensorType::Li => "light",
            SensorType::So => "sound",
        }
    }

    /// Whether the sensor natively reports decimals (temperature and humidity)
    /// or integer counts (air quality, light, sound).
    pub fn reports_float(self) -> bool {
        matches!(self, SensorType::Th | SensorType::Hu)
    }

    /// Best-effort mapping from a free-form column name.
    pub fn from_column_name(name: &str) -> Option<SensorType> {
        let lower = name.to_ascii_lowercase();
        if let Ok(t) = name.parse() {
            return Some(t);
        }
        if lower.contains("temp") {
            Some(SensorType::Th)
        } else if lower.contains("hum") {
            Some(SensorType::Hu)
        } else if lower.contains("air") || lower.contains("quality") || lower.contains("gas") {
            Some(SensorType::Aq)
        } else if lower.contains("light") || lower.contains("lux") {
            Some(SensorType::Li)
        } else if lower.contains("sound") || lower.contains("loud") || lower.contains("noise") {
            Some(SensorType::So)
        } else {
            None
        }
    }
}

impl fmt::Display for SensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SensorType {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TH" => Ok(SensorType::Th),
            "HU" => Ok(SensorType::Hu),
            "AQ" => Ok(SensorType::Aq),
            "LI" => Ok(SensorType::Li),
            "SO" => Ok(SensorType::So),
            other => Err(WireError::UnknownSensorType(other.to_string())),
        }
    }
}

/// Location, sensor and microcontroller identifiers of a reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeIdentity {
    location_id: u8,
    sensor_id: u16,
    mcu_id: u8,
}

impl NodeIdentity {
    pub fn new(mcu_id: u8, location_id: u8, sensor_id: u16) -> Result<Self, WireError> {
        if mcu_id > MAX_MCU_ID {
            return Err(WireError::IdOutOfRange {
                field: Field::Mcu,
                value: mcu_id.into(),
            });
        }
        if location_id > MAX_LOCATION_ID {
            return Err(WireError::LocationOutOfRange(location_id.into()));
        }
        if sensor_id > MAX_SENSOR_ID {
            return Err(WireError::IdOutOfRange {
                field: Field::Sensor,
                value: sensor_id.into(),
            });
        }
        Ok(Self {
            location_id,
            sensor_id,
            mcu_id,
        })
    }

    pub fn location_id(&self) -> u8 {
        self.location_id
    }

    pub fn sensor_id(&self) -> u16 {
        self.sensor_id
    }

    pub fn mcu_id(&self) -> u8 {
        self.mcu_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SensorValue {
    Float(f64),
    Integer(i64),
}

impl SensorValue {
    /// A decimal value; rejects NaN and infinities.
    pub fn float(v: f64) -> Result<Self, WireError> {
        if v.is_finite() {
            Ok(SensorValue::Float(v))
        } else {
            Err(WireError::NonFinite(v))
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            SensorValue::Float(v) => v,
            SensorValue::Integer(v) => v as f64,
        }
    }

    fn indicator(&self) -> char {
        match self {
            SensorValue::Float(_) => 'F',
            SensorValue::Integer(_) => 'I',
        }
    }

    fn render(&self) -> String {
        match *self {
            SensorValue::Float(v) => format!("{v:.2}"),
            SensorValue::Integer(v) => v.to_string(),
        }
    }

    /// Value as it survives the wire: floats snapped to two decimals.
    pub fn quantized(&self) -> SensorValue {
        match *self {
            SensorValue::Float(v) => SensorValue::Float(quantize(v)),
            other => other,
        }
    }
}

/// Snap a decimal to the value a receiver reads back after the two-digit
/// text rendering.
pub fn quantize(v: f64) -> f64 {
    format!("{v:.2}").parse().unwrap_or(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub identity: NodeIdentity,
    pub sensor_type: SensorType,
    pub value: SensorValue,
    /// Milliseconds since epoch.
    pub timestamp: u64,
}

impl SensorReading {
    pub fn new(
        identity: NodeIdentity,
        sensor_type: SensorType,
        value: SensorValue,
        timestamp: u64,
    ) -> Result<Self, WireError> {
        if let SensorValue::Float(v) = value {
            if !v.is_finite() {
                return Err(WireError::NonFinite(v));
            }
        }
        Ok(Self {
            identity,
            sensor_type,
            value,
            timestamp,
        })
    }
}

pub fn encode_text(reading: &SensorReading) -> String {
    let id = &reading.identity;
    format!(
        "{}{:02}{:03}{}{}{}",
        id.mcu_id,
        id.location_id,
        id.sensor_id,
        reading.sensor_type.code(),
        reading.value.indicator(),
        reading.value.render()
    )
}

/// Decode one text line. The wire format carries no clock, so the caller
/// supplies the receive-side timestamp.
pub fn decode_text(line: &str, timestamp: u64) -> Result<SensorReading, WireError> {
    decode_bytes(line.as_bytes(), timestamp)
}

pub fn encode_ble(reading: &SensorReading) -> Result<Vec<u8>, WireError> {
    let bytes = encode_text(reading).into_bytes();
    if bytes.len() > BLE_MAX_PAYLOAD {
        return Err(WireError::PayloadTooLong { len: bytes.len() });
    }
    Ok(bytes)
}

pub fn decode_ble(buffer: &[u8], timestamp: u64) -> Result<SensorReading, WireError> {
    if let Some((offset, &byte)) = buffer.iter().enumerate().find(|(_, b)| !b.is_ascii()) {
        return Err(WireError::NonAsciiByte { offset, byte });
    }
    decode_bytes(buffer, timestamp)
}

fn decode_bytes(bytes: &[u8], timestamp: u64) -> Result<SensorReading, WireError> {
    if bytes.len() <= HEADER_LEN {
        return Err(WireError::MalformedLength { len: bytes.len() });
    }
    let mcu = parse_digits(&bytes[0..1], Field::Mcu)?;
    let location = parse_digits(&bytes[1..3], Field::Location)?;
    let sensor = parse_digits(&bytes[3..6], Field::Sensor)?;
    let code = &bytes[6..8];
    let sensor_type: SensorType = std::str::from_utf8(code)
        .map_err(|_| WireError::UnknownSensorType(String::from_utf8_lossy(code).into_owned()))?
        .parse()?;
    let indicator = bytes[8];
    let value_bytes = &bytes[HEADER_LEN..];
    let value_text = std::str::from_utf8(value_bytes).map_err(|_| non_numeric(value_bytes))?;

    if location > u32::from(MAX_LOCATION_ID) {
        return Err(WireError::LocationOutOfRange(location));
    }
    let value = match indicator {
        b'F' => {
            if !value_text
                .bytes()
                .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+'))
            {
                return Err(non_numeric(value_bytes));
            }
            let v: f64 = value_text.parse().map_err(|_| non_numeric(value_bytes))?;
            SensorValue::float(v)?
        }
        b'I' => SensorValue::Integer(value_text.parse().map_err(|_| non_numeric(value_bytes))?),
        other => return Err(WireError::UnknownIndicator(char::from(other))),
    };

    // Header digit widths bound every id below its maximum except location.
    let identity = NodeIdentity::new(mcu as u8, location as u8, sensor as u16)?;
    SensorReading::new(identity, sensor_type, value, timestamp)
}

fn parse_digits(bytes: &[u8], field: Field) -> Result<u32, WireError> {
    if !bytes.iter().all(u8::is_ascii_digit) {
        return Err(WireError::NonNumericValue {
            field,
            text: String::from_utf8_lossy(bytes).into_owned(),
        });
    }
    Ok(bytes
        .iter()
        .fold(0u32, |acc, b| acc * 10 + u32::from(b - b'0')))
}

fn non_numeric(bytes: &[u8]) -> WireError {
    WireError::NonNumericValue {
        field: Field::Value,
        text: String::from_utf8_lossy(bytes).into_owned(),
    }
}
