// SPDX-License-Identifier: Apache-2.0

//! Structured event logging: one JSON object per event on stderr, or a
//! human-readable line when JSON mode is off.

use std::io::Write as _;

pub struct Logger {
    json: bool,
}

impl Logger {
    pub fn new(json: bool) -> Self {
        Logger { json }
    }

    pub fn event(&self, event: &str, fields: &[(&str, String)]) {
        let stderr = std::io::stderr();
        let mut out = stderr.lock();
        if self.json {
            let mut map = serde_json::Map::new();
            map.insert(
                "event".to_string(),
                serde_json::Value::String(event.to_string()),
            );
            for (k, v) in fields {
                map.insert(k.to_string(), serde_json::Value::String(v.clone()));
            }
            let _ = writeln!(out, "{}", serde_json::Value::Object(map));
        } else {
            let mut line = format!("[{}]", event);
            for (k, v) in fields {
                line.push_str(&format!(" {}={}", k, v));
            }
            let _ = writeln!(out, "{}", line);
        }
    }
}
