use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codec::{self, Address, CodecError};
use crate::ledger::Amount;

use super::ReputationIndex;

/// Known URLs by marker. Markers are one-way hashes, so URLs for display
/// have to be supplied by the caller.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRegistry {
    urls: BTreeMap<Address, String>,
}

impl UrlRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, url: &str) -> Result<Address, CodecError> {
        let marker = codec::derive_service_address(url)?;
        self.urls.insert(marker, url.to_string());
        Ok(marker)
    }

    pub fn url(&self, marker: &Address) -> Option<&str> {
        self.urls.get(marker).map(String::as_str)
    }
}

/// One line of a reputation report. Column order is fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub service: Address,
    pub url: Option<String>,
    /// Base units.
    pub score: u64,
    pub events: usize,
    pub last_height: Option<u64>,
}

/// Rows for every service seen in a payment, ordered by marker text.
pub fn report_rows(index: &ReputationIndex, registry: &UrlRegistry) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = index
        .services()
        .map(|(marker, stats)| ReportRow {
            service: *marker,
            url: registry.url(marker).map(str::to_string),
            score: stats.score.base_units(),
            events: stats.events,
            last_height: stats.last_height,
        })
        .collect();
    rows.sort_by_key(|r| r.service.text());
    rows
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["service", "url", "score", "events", "last_height"])?;
    for row in rows {
        writer.write_record([
            row.service.text(),
            row.url.clone().unwrap_or_default(),
            row.score.to_string(),
            row.events.to_string(),
            row.last_height.map(|h| h.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[ReportRow], mut out: W) -> std::io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

impl ReportRow {
    pub fn score_amount(&self) -> Amount {
        Amount::from_base_units(self.score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reputation::{ReputationEvent, ScoringMode};
    use crate::codec::TxId;
    use crate::ledger::KeyPair;

    #[test]
    fn csv_columns_are_stable() {
        let mut index = ReputationIndex::new(ScoringMode::Unweighted);
        let mut registry = UrlRegistry::new();
        let marker = registry.register("http://foo.bar").unwrap();
        index.record(ReputationEvent {
            service: marker,
            producer: KeyPair::from_label("p").id(),
            voter: KeyPair::from_label("c").id(),
            vote_fee: Amount::from_base_units(300_000),
            contribution: Amount::from_base_units(300_000),
            height: 2,
            payment_txid: TxId([1; 32]),
            voucher_txid: TxId([2; 32]),
        });
        let rows = report_rows(&index, &registry);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "service,url,score,events,last_height\n148TGVNRVSvgCQsfqfzdfv5nG8uzjCd4PP,http://foo.bar,300000,1,2\n"
        );
        let mut json = Vec::new();
        write_json(&rows, &mut json).unwrap();
        assert_eq!(
            String::from_utf8(json).unwrap(),
            "{\"service\":\"148TGVNRVSvgCQsfqfzdfv5nG8uzjCd4PP\",\"url\":\"http://foo.bar\",\"score\":300000,\"events\":1,\"last_height\":2}\n"
        );
    }
}
