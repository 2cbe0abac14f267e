//! Edge-node code generation from a declarative node specification.
//!
//! A [`NodeSpec`] names the sensors, microcontroller, location, transfer rate,
//! aggregation policy and one radio protocol with its parameters.
//! [`generate`] expands it into a transmitter sketch for the microcontroller,
//! a receiver script for the fog device, the shell setup commands needed by
//! Bluetooth Classic, and a short Node-RED wiring hint.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::transport_sim::Protocol;
use crate::wire_format::{SensorType, MAX_LOCATION_ID, MAX_SENSOR_ID};

pub const MIN_TRANSFER_RATE_MS: u64 = 30_000;
pub const MAX_TRANSFER_RATE_MS: u64 = 300_000;

/// Sampling period assumed inside a transfer window.
pub const SAMPLE_PERIOD_MS: u64 = 1_000;

pub const MAX_LOCATIONS: usize = MAX_LOCATION_ID as usize + 1;

pub const TRANSMITTER_FILE: &str = "transmitter.ino.txt";
pub const RECEIVER_FILE: &str = "receiver.py.txt";
pub const SETUP_FILE: &str = "setup.sh.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mcu {
    Nano33BleSense,
    NanoRp2040Connect,
    RaspberryPiPico,
}

impl Mcu {
    /// Microcontroller id carried in every wire message.
    pub fn id(self) -> u8 {
        match self {
            Mcu::Nano33BleSense => 1,
            Mcu::NanoRp2040Connect => 2,
            Mcu::RaspberryPiPico => 3,
        }
    }

    pub fn board_name(self) -> &'static str {
        match self {
            Mcu::Nano33BleSense => "Arduino Nano 33 BLE Sense",
            Mcu::NanoRp2040Connect => "Arduino Nano RP2040 Connect",
            Mcu::RaspberryPiPico => "Raspberry Pi Pico",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Lowest,
    Mean,
    Highest,
}

impl Aggregation {
    fn macro_name(self) -> &'static str {
        match self {
            Aggregation::Lowest => "AGG_LOWEST",
            Aggregation::Mean => "AGG_MEAN",
            Aggregation::Highest => "AGG_HIGHEST",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BluetoothParams {
    #[serde(default)]
    pub mac: Option<String>,
    #[serde(default)]
    pub module_name: Option<String>,
    #[serde(default)]
    pub pin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum ProtocolParams {
    Wifi {
        ssid: String,
        password: String,
        host_ip: String,
        host_port: u16,
    },
    BluetoothClassic(BluetoothParams),
    Ble(BluetoothParams),
    Zigbee {
        pan_id: String,
        dest_addr_high: String,
        dest_addr_low: String,
    },
}

impl ProtocolParams {
    pub fn protocol(&self) -> Protocol {
        match self {
            ProtocolParams::Wifi { .. } => Protocol::Wifi,
            ProtocolParams::BluetoothClassic(_) => Protocol::BluetoothClassic,
            ProtocolParams::Ble(_) => Protocol::Ble,
            ProtocolParams::Zigbee { .. } => Protocol::Zigbee,
        }
    }

    fn text_fields(&self) -> Vec<(&'static str, &str)> {
        match self {
            ProtocolParams::Wifi {
                ssid,
                password,
                host_ip,
                ..
            } => vec![("ssid", ssid), ("password", password), ("host_ip", host_ip)],
            ProtocolParams::BluetoothClassic(bt) | ProtocolParams::Ble(bt) => [
                ("mac", &bt.mac),
                ("module_name", &bt.module_name),
                ("pin", &bt.pin),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect(),
            ProtocolParams::Zigbee {
                pan_id,
                dest_addr_high,
                dest_addr_low,
            } => vec![
                ("pan_id", pan_id),
                ("dest_addr_high", dest_addr_high),
                ("dest_addr_low", dest_addr_low),
            ],
        }
    }
}

/// Declarative description of one edge node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub sensors: BTreeSet<SensorType>,
    pub mcu: Mcu,
    pub location_name: String,
    pub location_id: u32,
    /// Id of the first selected sensor; the rest are numbered consecutively
    /// in `TH HU AQ LI SO` order.
    #[serde(default = "default_first_sensor_id")]
    pub first_sensor_id: u32,
    pub transfer_rate_ms: u64,
    pub aggregation: Aggregation,
    #[serde(flatten)]
    pub params: ProtocolParams,
}

fn default_first_sensor_id() -> u32 {
    1
}

impl NodeSpec {
    pub fn protocol(&self) -> Protocol {
        self.params.protocol()
    }

    /// `(sensor type, sensor id)` pairs in wire order.
    pub fn sensor_slots(&self) -> Vec<(SensorType, u32)> {
        self.sensors
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, self.first_sensor_id + i as u32))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("transfer rate {0} ms outside [{MIN_TRANSFER_RATE_MS}, {MAX_TRANSFER_RATE_MS}]")]
    RateOutOfRange(u64),
    #[error("bluetooth protocols require a MAC address")]
    MissingMac,
    #[error("at least one sensor must be selected")]
    EmptySensorSet,
    #[error("location id {0} exceeds {MAX_LOCATION_ID}")]
    LocationOutOfRange(u32),
    #[error("sensor ids {first}..={last} exceed {MAX_SENSOR_ID}")]
    SensorIdOutOfRange { first: u32, last: u32 },
    #[error("field {field} contains characters outside [A-Za-z0-9 _.:-]: {chars:?}")]
    IllegalCharacters { field: &'static str, chars: String },
}

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("invalid node spec: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidSpec(Vec<SpecError>),
    #[error("location registry is full ({MAX_LOCATIONS} locations)")]
    RegistryFull,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn is_allowed_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, ' ' | '_' | '.' | ':' | '-')
}

/// Strip every character outside the whitelist.
pub fn sanitize(text: &str) -> String {
    text.chars().filter(|&c| is_allowed_char(c)).collect()
}

/// Check every constraint and return all violations at once.
pub fn validate_spec(spec: &NodeSpec) -> Result<(), Vec<SpecError>> {
    let mut errors = Vec::new();
    if !(MIN_TRANSFER_RATE_MS..=MAX_TRANSFER_RATE_MS).contains(&spec.transfer_rate_ms) {
        errors.push(SpecError::RateOutOfRange(spec.transfer_rate_ms));
    }
    if spec.sensors.is_empty() {
        errors.push(SpecError::EmptySensorSet);
    }
    if spec.location_id > u32::from(MAX_LOCATION_ID) {
        errors.push(SpecError::LocationOutOfRange(spec.location_id));
    }
    if !spec.sensors.is_empty() {
        let last = spec.first_sensor_id + spec.sensors.len() as u32 - 1;
        if last > u32::from(MAX_SENSOR_ID) {
            errors.push(SpecError::SensorIdOutOfRange {
                first: spec.first_sensor_id,
                last,
            });
        }
    }
    if let ProtocolParams::BluetoothClassic(bt) | ProtocolParams::Ble(bt) = &spec.params {
        if bt.mac.as_deref().is_none_or(|m| m.trim().is_empty()) {
            errors.push(SpecError::MissingMac);
        }
    }
    let mut text_fields = vec![("location_name", spec.location_name.as_str())];
    text_fields.extend(spec.params.text_fields());
    for (field, value) in text_fields {
        let bad: String = value.chars().filter(|&c| !is_allowed_char(c)).collect();
        if !bad.is_empty() {
            errors.push(SpecError::IllegalCharacters { field, chars: bad });
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedBundle {
    pub transmitter_source: String,
    pub receiver_source: String,
    pub shell_commands: Vec<String>,
    pub node_red_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub protocol: String,
    pub mcu: Mcu,
    pub mcu_id: u8,
    pub location_name: String,
    pub location_id: u32,
    pub sensors: Vec<String>,
    pub files: Vec<ManifestEntry>,
    pub node_red_hint: String,
}

impl GeneratedBundle {
    pub fn setup_script(&self) -> String {
        let mut s = String::from("#!/bin/sh\n");
        if self.shell_commands.is_empty() {
            s.push_str("# No fog-side setup commands are needed for this protocol.\n");
        }
        for c in &self.shell_commands {
            s.push_str(c);
            s.push('\n');
        }
        s
    }

    pub fn manifest(&self, spec: &NodeSpec) -> BundleManifest {
        let files = [
            (TRANSMITTER_FILE, self.transmitter_source.clone()),
            (RECEIVER_FILE, self.receiver_source.clone()),
            (SETUP_FILE, self.setup_script()),
        ]
        .into_iter()
        .map(|(file, body)| ManifestEntry {
            file: file.to_string(),
            bytes: body.len(),
            sha256: hex_digest(body.as_bytes()),
        })
        .collect();
        BundleManifest {
            protocol: spec.protocol().to_string(),
            mcu: spec.mcu,
            mcu_id: spec.mcu.id(),
            location_name: sanitize(&spec.location_name),
            location_id: spec.location_id,
            sensors: spec.sensors.iter().map(|s| s.code().to_string()).collect(),
            files,
            node_red_hint: self.node_red_hint.clone(),
        }
    }

    /// Write the three source files plus `manifest.json` into `dir`.
    pub fn write_to(&self, spec: &NodeSpec, dir: &Path) -> Result<BundleManifest, CodegenError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(TRANSMITTER_FILE), &self.transmitter_source)?;
        std::fs::write(dir.join(RECEIVER_FILE), &self.receiver_source)?;
        std::fs::write(dir.join(SETUP_FILE), self.setup_script())?;
        let manifest = self.manifest(spec);
        let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(manifest)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn generate(spec: &NodeSpec) -> Result<GeneratedBundle, CodegenError> {
    validate_spec(spec).map_err(CodegenError::InvalidSpec)?;
    Ok(GeneratedBundle {
        transmitter_source: transmitter_sketch(spec),
        receiver_source: receiver_script(spec),
        shell_commands: shell_commands(spec),
        node_red_hint: node_red_hint(spec),
    })
}

fn transmitter_sketch(spec: &NodeSpec) -> String {
    let mut s = String::new();
    let slots = spec.sensor_slots();
    let location = sanitize(&spec.location_name);

    let _ = writeln!(s, "// Edge transmitter for {}", spec.mcu.board_name());
    let _ = writeln!(
        s,
        "// Location: {location} (id {:02}), protocol: {}",
        spec.location_id,
        spec.protocol()
    );
    s.push_str("// Lines marked EDIT may need changes for your sensor modules.\n\n");

    match &spec.params {
        ProtocolParams::Wifi { .. } => match spec.mcu {
            Mcu::RaspberryPiPico => s.push_str("#include <WiFi.h>\n"),
            _ => s.push_str("#include <WiFiNINA.h>\n"),
        },
        ProtocolParams::Ble(_) => s.push_str("#include <ArduinoBLE.h>\n"),
        ProtocolParams::BluetoothClassic(_) | ProtocolParams::Zigbee { .. } => {}
    }
    s.push_str("#include <math.h>\n\n");

    let _ = writeln!(s, "#define MCU_ID {}", spec.mcu.id());
    let _ = writeln!(s, "#define LOCATION_ID {}", spec.location_id);
    let _ = writeln!(s, "#define TRANSFER_RATE_MS {}UL", spec.transfer_rate_ms);
    let _ = writeln!(s, "#define SAMPLE_PERIOD_MS {SAMPLE_PERIOD_MS}UL");
    s.push_str("#define AGG_LOWEST 0\n#define AGG_MEAN 1\n#define AGG_HIGHEST 2\n");
    let _ = writeln!(s, "#define AGGREGATION {}", spec.aggregation.macro_name());
    s.push_str("#define VALUE_DECIMALS 2\n");
    s.push_str("#define MSG_FORMAT \"%d%02d%03d%s%c%s\"\n\n");

    match &spec.params {
        ProtocolParams::Wifi {
            ssid,
            password,
            host_ip,
            host_port,
        } => {
            let _ = writeln!(s, "const char WIFI_SSID[] = \"{}\";", sanitize(ssid));
            let _ = writeln!(
                s,
                "const char WIFI_PASSWORD[] = \"{}\";",
                sanitize(password)
            );
            let _ = writeln!(s, "const char HOST_IP[] = \"{}\";", sanitize(host_ip));
            let _ = writeln!(s, "const int HOST_PORT = {host_port};");
            s.push_str("WiFiClient client;\n\n");
        }
        ProtocolParams::BluetoothClassic(bt) => {
            let _ = writeln!(
                s,
                "// Serial Bluetooth module \"{}\" (PIN {}), fog MAC {}",
                sanitize(bt.module_name.as_deref().unwrap_or("HC-05")),
                sanitize(bt.pin.as_deref().unwrap_or("1234")),
                sanitize(bt.mac.as_deref().unwrap_or_default())
            );
            s.push_str("#define BT_SERIAL Serial1\n#define BT_BAUD 9600\n\n");
        }
        ProtocolParams::Ble(bt) => {
            let _ = writeln!(
                s,
                "const char BLE_LOCAL_NAME[] = \"{}\";",
                sanitize(bt.module_name.as_deref().unwrap_or("anoml-edge"))
            );
            let _ = writeln!(
                s,
                "// Central (fog) MAC: {}",
                sanitize(bt.mac.as_deref().unwrap_or_default())
            );
            s.push_str("BLEService readingService(\"181A\");\n");
            s.push_str("BLECharacteristic readingChar(\"2A6E\", BLERead | BLENotify, 20);\n\n");
        }
        ProtocolParams::Zigbee {
            pan_id,
            dest_addr_high,
            dest_addr_low,
        } => {
            let _ = writeln!(s, "const char XBEE_PAN_ID[] = \"{}\";", sanitize(pan_id));
            let _ = writeln!(
                s,
                "const char XBEE_DH[] = \"{}\";",
                sanitize(dest_addr_high)
            );
            let _ = writeln!(s, "const char XBEE_DL[] = \"{}\";", sanitize(dest_addr_low));
            s.push_str("#define XBEE_SERIAL Serial1\n\n");
        }
    }

    s.push_str("struct SensorSlot {\n  const char *code;\n  int id;\n  char indicator;\n  float (*read)();\n};\n\n");

    for (t, _) in &slots {
        let (pin, body) = match t {
            SensorType::Th => ("A0", "analogRead(A0) * 0.0977f"),
            SensorType::Hu => ("A1", "analogRead(A1) * 0.0977f"),
            SensorType::Aq => ("A2", "(float) analogRead(A2)"),
            SensorType::Li => ("A3", "(float) analogRead(A3)"),
            SensorType::So => ("A6", "(float) analogRead(A6)"),
        };
        let _ = writeln!(
            s,
            "float read{}() {{\n  // EDIT: {} sensor on {pin}; replace with the module's library call\n  return {body};\n}}\n",
            t.code(),
            t.description()
        );
    }

    s.push_str("const SensorSlot SENSORS[] = {\n");
    for (t, id) in &slots {
        let ind = if t.reports_float() { 'F' } else { 'I' };
        let _ = writeln!(
            s,
            "  {{ \"{}\", {id}, '{ind}', read{} }},",
            t.code(),
            t.code()
        );
    }
    s.push_str("};\n");
    let _ = writeln!(
        s,
        "const int SENSOR_COUNT = {};\n\nfloat lowest[SENSOR_COUNT];\nfloat highest[SENSOR_COUNT];\nfloat total[SENSOR_COUNT];\nunsigned long samples = 0;\n",
        slots.len()
    );

    s.push_str(
        "void resetWindow() {\n  for (int i = 0; i < SENSOR_COUNT; i++) {\n    lowest[i] = INFINITY;\n    highest[i] = -INFINITY;\n    total[i] = 0.0f;\n  }\n  samples = 0;\n}\n\n",
    );
    s.push_str(
        "float aggregate(int i) {\n#if AGGREGATION == AGG_LOWEST\n  return lowest[i];\n#elif AGGREGATION == AGG_HIGHEST\n  return highest[i];\n#else\n  return total[i] / samples;\n#endif\n}\n\n",
    );
    s.push_str(
        "void formatValue(const SensorSlot &slot, float value, char *out, size_t len) {\n  if (slot.indicator == 'F') {\n    dtostrf(value, 0, VALUE_DECIMALS, out);\n  } else {\n    snprintf(out, len, \"%ld\", lround(value));\n  }\n}\n\n",
    );
    s.push_str(
        "void buildMessage(const SensorSlot &slot, float value, char *msg, size_t len) {\n  char num[24];\n  formatValue(slot, value, num, sizeof(num));\n  snprintf(msg, len, MSG_FORMAT, MCU_ID, LOCATION_ID, slot.id, slot.code, slot.indicator, num);\n}\n\n",
    );

    let (setup_body, send_body) = match &spec.params {
        ProtocolParams::Wifi { .. } => (
            "  while (WiFi.begin(WIFI_SSID, WIFI_PASSWORD) != WL_CONNECTED) {\n    delay(1000);\n  }\n",
            "  if (client.connected() || client.connect(HOST_IP, HOST_PORT)) {\n    client.println(msg);\n  }\n",
        ),
        ProtocolParams::BluetoothClassic(_) => (
            "  BT_SERIAL.begin(BT_BAUD);\n",
            "  BT_SERIAL.println(msg);\n",
        ),
        ProtocolParams::Ble(_) => (
            "  BLE.begin();\n  BLE.setLocalName(BLE_LOCAL_NAME);\n  BLE.setAdvertisedService(readingService);\n  readingService.addCharacteristic(readingChar);\n  BLE.addService(readingService);\n  BLE.advertise();\n",
            "  BLE.poll();\n  readingChar.writeValue((const uint8_t *) msg, strlen(msg));\n",
        ),
        ProtocolParams::Zigbee { .. } => (
            "  XBEE_SERIAL.begin(9600);\n  delay(1100);\n  XBEE_SERIAL.print(\"+++\");\n  delay(1100);\n  XBEE_SERIAL.print(\"ATID\"); XBEE_SERIAL.println(XBEE_PAN_ID);\n  XBEE_SERIAL.print(\"ATDH\"); XBEE_SERIAL.println(XBEE_DH);\n  XBEE_SERIAL.print(\"ATDL\"); XBEE_SERIAL.println(XBEE_DL);\n  XBEE_SERIAL.println(\"ATCN\");\n",
            "  XBEE_SERIAL.println(msg);\n",
        ),
    };
    let _ = write!(
        s,
        "void sendMessage(const char *msg) {{\n{send_body}}}\n\nvoid setup() {{\n  Serial.begin(9600);\n{setup_body}  resetWindow();\n}}\n\n"
    );
    s.push_str(
        "void loop() {\n  unsigned long started = millis();\n  resetWindow();\n  while (millis() - started < TRANSFER_RATE_MS) {\n    for (int i = 0; i < SENSOR_COUNT; i++) {\n      float v = SENSORS[i].read();\n      lowest[i] = min(lowest[i], v);\n      highest[i] = max(highest[i], v);\n      total[i] += v;\n    }\n    samples++;\n    delay(SAMPLE_PERIOD_MS);\n  }\n  char msg[32];\n  for (int i = 0; i < SENSOR_COUNT; i++) {\n    buildMessage(SENSORS[i], aggregate(i), msg, sizeof(msg));\n    sendMessage(msg);\n  }\n}\n",
    );
    s
}

fn receiver_script(spec: &NodeSpec) -> String {
    let mut s = String::from("#!/usr/bin/env python3\n");
    let _ = writeln!(
        s,
        "\"\"\"Fog receiver for location {} ({:02}) over {}.\"\"\"",
        sanitize(&spec.location_name),
        spec.location_id,
        spec.protocol()
    );
    s.push_str("import csv\nimport sys\nimport time\n");
    match spec.protocol() {
        Protocol::Wifi => s.push_str("import socket\n"),
        Protocol::BluetoothClassic | Protocol::Zigbee => s.push_str("import serial\n"),
        Protocol::Ble => s.push_str("import asyncio\nfrom bleak import BleakClient\n"),
    }
    s.push_str(
        "\nTYPES = {\"TH\", \"HU\", \"AQ\", \"LI\", \"SO\"}\nwriter = csv.writer(sys.stdout)\n\n\ndef decode(line):\n    line = line.strip()\n    if len(line) < 10 or line[6:8] not in TYPES or line[8] not in \"FI\":\n        return None\n    value = float(line[9:]) if line[8] == \"F\" else int(line[9:])\n    return int(time.time() * 1000), line[0], line[1:3], line[3:6], line[6:8], value\n\n\ndef handle(line):\n    row = decode(line)\n    if row is not None:\n        writer.writerow(row)\n        sys.stdout.flush()\n\n\n",
    );
    match &spec.params {
        ProtocolParams::Wifi { host_port, .. } => {
            let _ = write!(
                s,
                "def main():\n    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)\n    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)\n    server.bind((\"0.0.0.0\", {host_port}))\n    server.listen(8)\n    while True:\n        conn, _ = server.accept()\n        with conn, conn.makefile(\"r\") as stream:\n            for line in stream:\n                handle(line)\n"
            );
        }
        ProtocolParams::BluetoothClassic(_) => s.push_str(
            "def main():\n    with serial.Serial(\"/dev/rfcomm0\", 9600, timeout=None) as port:\n        while True:\n            handle(port.readline().decode(\"ascii\", errors=\"replace\"))\n",
        ),
        ProtocolParams::Ble(bt) => {
            let _ = write!(
                s,
                "ADDRESS = \"{}\"\nCHARACTERISTIC = \"00002a6e-0000-1000-8000-00805f9b34fb\"\n\n\nasync def run():\n    async with BleakClient(ADDRESS) as client:\n        await client.start_notify(CHARACTERISTIC, lambda _, data: handle(bytes(data).decode(\"ascii\")))\n        while True:\n            await asyncio.sleep(1)\n\n\ndef main():\n    asyncio.run(run())\n",
                sanitize(bt.mac.as_deref().unwrap_or_default())
            );
        }
        ProtocolParams::Zigbee { .. } => s.push_str(
            "def main():\n    with serial.Serial(\"/dev/ttyUSB0\", 9600, timeout=None) as port:\n        while True:\n            handle(port.readline().decode(\"ascii\", errors=\"replace\"))\n",
        ),
    }
    s.push_str("\n\nif __name__ == \"__main__\":\n    main()\n");
    s
}

fn shell_commands(spec: &NodeSpec) -> Vec<String> {
    let ProtocolParams::BluetoothClassic(bt) = &spec.params else {
        return Vec::new();
    };
    let mac = sanitize(bt.mac.as_deref().unwrap_or_default());
    vec![
        "sudo apt-get install -y bluez python3-serial".to_string(),
        "sudo systemctl enable --now bluetooth".to_string(),
        "bluetoothctl power on".to_string(),
        "bluetoothctl agent on".to_string(),
        format!("bluetoothctl pair {mac}"),
        format!("bluetoothctl trust {mac}"),
        format!("sudo rfcomm bind /dev/rfcomm0 {mac} 1"),
    ]
}

fn node_red_hint(spec: &NodeSpec) -> String {
    let input = match &spec.params {
        ProtocolParams::Wifi { host_port, .. } => {
            format!("tcp in (listen on port {host_port}, stream of strings, delimiter \\n)")
        }
        ProtocolParams::BluetoothClassic(_) => {
            "serial in (/dev/rfcomm0, 9600 baud, split on \\n)".into()
        }
        ProtocolParams::Ble(_) => "exec (python3 receiver.py) stdout".into(),
        ProtocolParams::Zigbee { .. } => "serial in (/dev/ttyUSB0, 9600 baud, split on \\n)".into(),
    };
    format!(
        "{input} -> function (decode: mcu=msg[0], location=msg[1..3], sensor=msg[3..6], type=msg[6..8], indicator=msg[8], value=msg[9..]) -> csv (timestamp,mcu,location,sensor,type,value) -> file or http request to the fog inference service"
    )
}

/// Location name to id mapping; ids start at 00 and are never reused.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationRegistry {
    ids: BTreeMap<String, u8>,
}

impl LocationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<u8> {
        self.ids.get(name).copied()
    }

    /// Returns the updated registry and the id for `name`: the existing id
    /// for a known name, otherwise the smallest unused id.
    pub fn assign(&self, name: &str) -> Result<(LocationRegistry, u8), CodegenError> {
        if let Some(id) = self.get(name) {
            return Ok((self.clone(), id));
        }
        let used: BTreeSet<u8> = self.ids.values().copied().collect();
        let id = (0..=MAX_LOCATION_ID)
            .find(|i| !used.contains(i))
            .ok_or(CodegenError::RegistryFull)?;
        let mut next = self.clone();
        next.ids.insert(name.to_string(), id);
        Ok((next, id))
    }
}

pub fn assign_location_id(
    registry: &LocationRegistry,
    name: &str,
) -> Result<(LocationRegistry, u8), CodegenError> {
    registry.assign(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn wifi_spec() -> NodeSpec {
        NodeSpec {
            sensors: [SensorType::Th].into_iter().collect(),
            mcu: Mcu::Nano33BleSense,
            location_name: "kitchen".into(),
            location_id: 1,
            first_sensor_id: 1,
            transfer_rate_ms: 30_000,
            aggregation: Aggregation::Mean,
            params: ProtocolParams::Wifi {
                ssid: "lab-net".into(),
                password: "s3cret".into(),
                host_ip: "192.168.1.20".into(),
                host_port: 5005,
            },
        }
    }

    #[test]
    fn boundary_rate_is_accepted() {
        assert_eq!(validate_spec(&wifi_spec()), Ok(()));
        let mut s = wifi_spec();
        s.transfer_rate_ms = 300_000;
        assert_eq!(validate_spec(&s), Ok(()));
    }

    #[test]
    fn rate_below_minimum() {
        let mut s = wifi_spec();
        s.transfer_rate_ms = 29_999;
        assert_eq!(
            validate_spec(&s),
            Err(vec![SpecError::RateOutOfRange(29_999)])
        );
        s.transfer_rate_ms = 300_001;
        assert_eq!(
            validate_spec(&s),
            Err(vec![SpecError::RateOutOfRange(300_001)])
        );
    }

    #[test]
    fn ble_without_mac() {
        let mut s = wifi_spec();
        s.params = ProtocolParams::Ble(BluetoothParams::default());
        assert_eq!(validate_spec(&s), Err(vec![SpecError::MissingMac]));
    }

    #[test]
    fn reports_every_violation() {
        let mut s = wifi_spec();
        s.transfer_rate_ms = 10;
        s.sensors.clear();
        s.location_id = 99;
        s.location_name = "<script>".into();
        s.params = ProtocolParams::BluetoothClassic(BluetoothParams::default());
        let errs = validate_spec(&s).unwrap_err();
        assert_eq!(errs.len(), 5, "{errs:?}");
        assert!(errs.contains(&SpecError::IllegalCharacters {
            field: "location_name",
            chars: "<>".into()
        }));
        assert!(matches!(generate(&s), Err(CodegenError::InvalidSpec(e)) if e == errs));
    }

    #[test]
    fn sensor_ids_must_fit() {
        let mut s = wifi_spec();
        s.sensors = SensorType::ALL.into_iter().collect();
        s.first_sensor_id = 996;
        assert_eq!(
            validate_spec(&s),
            Err(vec![SpecError::SensorIdOutOfRange {
                first: 996,
                last: 1000
            }])
        );
    }

    #[test]
    fn sanitize_whitelist() {
        assert_eq!(sanitize("a<b>c d_e.f:g-h\"'"), "abc d_e.f:g-h");
    }

    #[test]
    fn wifi_bundle_echoes_inputs() {
        let b = generate(&wifi_spec()).unwrap();
        assert!(b.transmitter_source.contains("\"lab-net\""));
        assert!(b.transmitter_source.contains("HOST_PORT = 5005"));
        assert!(b
            .transmitter_source
            .contains("#define TRANSFER_RATE_MS 30000UL"));
        assert!(b.shell_commands.is_empty());
        assert!(b.receiver_source.contains("5005"));
    }

    #[test]
    fn bluetooth_classic_has_shell_commands() {
        let mut s = wifi_spec();
        s.params = ProtocolParams::BluetoothClassic(BluetoothParams {
            mac: Some("98:D3:31:FB:12:34".into()),
            ..Default::default()
        });
        let b = generate(&s).unwrap();
        assert!(!b.shell_commands.is_empty());
        assert!(b
            .shell_commands
            .iter()
            .any(|c| c.contains("98:D3:31:FB:12:34")));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            generate(&wifi_spec()).unwrap(),
            generate(&wifi_spec()).unwrap()
        );
    }

    #[test]
    fn registry_assigns_smallest_free_id() {
        let empty = LocationRegistry::new();
        let (reg, id) = assign_location_id(&empty, "kitchen").unwrap();
        assert_eq!(id, 0);
        let (again, id) = assign_location_id(&reg, "kitchen").unwrap();
        assert_eq!((id, &again), (0, &reg));
        let (reg, id) = reg.assign("hall").unwrap();
        assert_eq!(id, 1);
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn registry_full_at_99() {
        let mut reg = LocationRegistry::new();
        for i in 0..99 {
            reg = reg.assign(&format!("room{i}")).unwrap().0;
        }
        assert_eq!(reg.get("room98"), Some(98));
        assert!(matches!(
            reg.assign("attic"),
            Err(CodegenError::RegistryFull)
        ));
        assert_eq!(reg.assign("room5").unwrap().1, 5);
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            sensors = ["TH", "HU"]
            mcu = "nano_rp2040_connect"
            location_name = "lab"
            location_id = 3
            transfer_rate_ms = 60000
            aggregation = "highest"
            protocol = "zigbee"
            pan_id = "1234"
            dest_addr_high = "0013A200"
            dest_addr_low = "40B5F1C2"
        "#;
        let spec: NodeSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.protocol(), Protocol::Zigbee);
        assert_eq!(spec.first_sensor_id, 1);
        assert_eq!(validate_spec(&spec), Ok(()));
    }
}
