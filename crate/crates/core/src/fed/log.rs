use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{ClientId, DispatchMode};

/// One server decision, logged as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub round: u64,
    pub uploader: ClientId,
    pub version: u64,
    pub aggregator: String,
    /// normalised aggregation weights per recorded client
    pub coefficients: BTreeMap<ClientId, f64>,
    pub versions: BTreeMap<ClientId, u64>,
    pub max_gap: u64,
    pub mode: DispatchMode,
}

/// JSON-lines sink for [`DecisionRecord`]s.
pub struct DecisionLog<W: Write> {
    out: W,
}

impl<W: Write> DecisionLog<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn record(&mut self, rec: &DecisionRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
