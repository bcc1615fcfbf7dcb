//! IP geolocation behind a pluggable provider.

use std::io::Read;
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;

use aurora_core::events::Group;

use crate::error::ServiceError;

pub trait GeoProvider: Send + Sync {
    /// Region code for `ip`, if known.
    fn region(&self, ip: IpAddr) -> Option<String>;
}

/// RM when the region is the central one, NOT-RM for any other region,
/// UNKNOWN when the lookup fails.
pub fn geolocate(ip: Option<IpAddr>, provider: &dyn GeoProvider, central: &str) -> Group {
    match ip.and_then(|ip| provider.region(ip)) {
        Some(r) if r == central => Group::Rm,
        Some(_) => Group::NotRm,
        None => Group::Unknown,
    }
}

/// Inclusive IPv4 ranges read from `start,end,region` CSV.
#[derive(Clone, Debug, Default)]
pub struct CsvRangeGeo {
    /// Sorted by range start.
    ranges: Vec<(u32, u32, String)>,
}

impl CsvRangeGeo {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ServiceError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut ranges = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| ServiceError::Config(e.to_string()))?;
            let field = |i: usize| row.get(i).ok_or_else(|| ServiceError::Config(format!("geo row missing column {i}")));
            let ip = |s: &str| {
                s.parse::<Ipv4Addr>().map(u32::from).map_err(|_| ServiceError::Config(format!("bad IPv4 address `{s}`")))
            };
            let (start, end) = (ip(field(0)?)?, ip(field(1)?)?);
            if start > end {
                return Err(ServiceError::Config(format!("empty range {start}..{end}")));
            }
            ranges.push((start, end, field(2)?.to_string()));
        }
        ranges.sort();
        Ok(Self { ranges })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(file)
    }
}

impl GeoProvider for CsvRangeGeo {
    fn region(&self, ip: IpAddr) -> Option<String> {
        let IpAddr::V4(v4) = ip else { return None };
        let n = u32::from(v4);
        let idx = self.ranges.partition_point(|r| r.0 <= n);
        self.ranges[..idx].iter().rev().find(|r| r.1 >= n).map(|r| r.2.clone())
    }
}
