use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CedError, Result};

/// Per-session descriptors used by the group and correlation analyses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    /// Age in years.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
}

/// `metadata.json`: session id → metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetadataSidecar {
    pub sessions: BTreeMap<String, SessionMetadata>,
}

impl MetadataSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CedError::io(format!("reading metadata {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CedError::json(format!("parsing metadata {}", path.display()), e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serialises")
    }

    pub fn get(&self, session_id: &str) -> Option<&SessionMetadata> {
        self.sessions.get(session_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optional_fields_may_be_absent() {
        let side: MetadataSidecar =
            serde_json::from_str(r#"{"sessions":{"s1":{"gender":"F","age":4.5,"scores":{"css":3.0}},"s2":{}}}"#).unwrap();
        assert_eq!(side.get("s1").unwrap().scores["css"], 3.0);
        assert_eq!(side.get("s2").unwrap(), &SessionMetadata::default());
        let back: MetadataSidecar = serde_json::from_str(&side.to_json()).unwrap();
        assert_eq!(back, side);
    }
}
