//! TOML network files.
//!
//! ```toml
//! [[stations]]
//! name = "A"            # optional label
//!
//! [[classes]]
//! station = 1           # one-based
//! priority_rank = 2     # larger is served first at its station
//! mean_service = 0.5
//! service_dist = "erlang(k=2)"
//!
//! [routing]
//! matrix = [[0.0]]      # K×K, row k holds the exit probabilities of class k
//!
//! [[arrivals]]
//! class = 1             # one-based
//! rate = 0.9
//! dist = "exponential"
//!
//! [heavy_traffic]       # optional
//! lambda_star = [1.0]
//! m_star = [0.0]
//! ```
//!
//! Distribution strings are `exponential`, `deterministic`, `uniform(a=..)`,
//! `erlang(k=..)`, `hyperexp(scv=..)` and `lognormal(scv=..)`. Unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::DistributionModel;
use crate::error::{Error, Result};
use crate::network::{validate_spec, HeavyTrafficFamily, NetworkSpec, ValidatedNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub station: usize,
    pub priority_rank: i64,
    pub mean_service: f64,
    #[serde(default = "exponential")]
    pub service_dist: DistributionModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingEntry {
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalEntry {
    pub class: usize,
    pub rate: f64,
    #[serde(default = "exponential")]
    pub dist: DistributionModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavyTrafficEntry {
    pub lambda_star: Vec<f64>,
    pub m_star: Vec<f64>,
}

fn exponential() -> DistributionModel {
    DistributionModel::Exponential
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub stations: Vec<StationEntry>,
    pub classes: Vec<ClassEntry>,
    pub routing: RoutingEntry,
    #[serde(default)]
    pub arrivals: Vec<ArrivalEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heavy_traffic: Option<HeavyTrafficEntry>,
}

impl NetworkFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network files always serialize")
    }

    pub fn from_network(net: &ValidatedNetwork, family: Option<&HeavyTrafficFamily>) -> Self {
        let s = &net.spec;
        Self {
            stations: vec![StationEntry { name: None }; s.num_stations],
            classes: (0..s.num_classes())
                .map(|k| ClassEntry {
                    station: s.station_of[k] + 1,
                    priority_rank: s.priority_rank[k],
                    mean_service: s.mean_service[k],
                    service_dist: s.service_dist[k],
                })
                .collect(),
            routing: RoutingEntry { matrix: s.routing.clone() },
            arrivals: s
                .external()
                .into_iter()
                .map(|k| ArrivalEntry { class: k + 1, rate: s.arrival_rate[k], dist: s.arrival_dist[k] })
                .collect(),
            heavy_traffic: family.map(|f| HeavyTrafficEntry { lambda_star: f.lambda_star.clone(), m_star: f.m_star.clone() }),
        }
    }

    /// The raw spec with zero-based indices. Index ranges are checked here;
    /// everything else is left to validation.
    pub fn spec(&self) -> Result<NetworkSpec> {
        let j = self.stations.len();
        let k = self.classes.len();
        let mut station_of = Vec::with_capacity(k);
        for (i, c) in self.classes.iter().enumerate() {
            if c.station == 0 || c.station > j {
                return Err(Error::Parse(format!("class {}: station {} is not in 1..={j}", i + 1, c.station)));
            }
            station_of.push(c.station - 1);
        }
        let mut arrival_rate = vec![0.0; k];
        let mut arrival_dist = vec![DistributionModel::Exponential; k];
        let mut seen = vec![false; k];
        for a in &self.arrivals {
            if a.class == 0 || a.class > k {
                return Err(Error::Parse(format!("arrival class {} is not in 1..={k}", a.class)));
            }
            if std::mem::replace(&mut seen[a.class - 1], true) {
                return Err(Error::Parse(format!("class {} has two arrival entries", a.class)));
            }
            arrival_rate[a.class - 1] = a.rate;
            arrival_dist[a.class - 1] = a.dist;
        }
        Ok(NetworkSpec {
            num_stations: j,
            station_of,
            priority_rank: self.classes.iter().map(|c| c.priority_rank).collect(),
            routing: self.routing.matrix.clone(),
            arrival_rate,
            mean_service: self.classes.iter().map(|c| c.mean_service).collect(),
            arrival_dist,
            service_dist: self.classes.iter().map(|c| c.service_dist).collect(),
        })
    }

    pub fn network(&self) -> Result<ValidatedNetwork> {
        validate_spec(self.spec()?)
    }

    /// `None` when the file has no `heavy_traffic` section.
    pub fn family(&self) -> Result<Option<HeavyTrafficFamily>> {
        match &self.heavy_traffic {
            None => Ok(None),
            Some(h) => Ok(Some(HeavyTrafficFamily::new(self.network()?, h.lambda_star.clone(), h.m_star.clone())?)),
        }
    }

    pub fn require_family(&self) -> Result<HeavyTrafficFamily> {
        self.family()?.ok_or_else(|| Error::Parse("the file has no [heavy_traffic] section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot;
    use proptest::prelude::*;

    const MM1: &str = r#"
[[stations]]

[[classes]]
station = 1
priority_rank = 1
mean_service = 1.0

[routing]
matrix = [[0.0]]

[[arrivals]]
class = 1
rate = 0.5
"#;

    #[test]
    fn minimal_file() {
        let f = NetworkFile::parse(MM1).unwrap();
        let net = f.network().unwrap();
        assert_eq!(net.spec.arrival_rate, vec![0.5]);
        assert!(net.spec.all_exponential());
        assert!(f.family().unwrap().is_none());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_indices() {
        let typo = MM1.replace("mean_service", "mean_servce");
        assert!(matches!(NetworkFile::parse(&typo), Err(Error::Parse(_))));
        let extra = format!("{MM1}\n[extra]\nx = 1\n");
        assert!(NetworkFile::parse(&extra).is_err());
        let bad = NetworkFile::parse(&MM1.replace("station = 1", "station = 2")).unwrap();
        assert!(matches!(bad.network(), Err(Error::Parse(_))));
        let bad = NetworkFile::parse(&MM1.replace("class = 1", "class = 0")).unwrap();
        assert!(bad.network().is_err());
        assert!(NetworkFile::parse(&MM1.replace("\"", "").replace("rate = 0.5", "rate = 0.5\ndist = \"weibull\"")).is_err());
    }

    #[test]
    fn pilot_round_trip() {
        let fam = pilot::family(&pilot::DEFAULT_MEANS, [DistributionModel::Exponential; 6]).unwrap();
        let f = NetworkFile::from_network(&fam.base, Some(&fam));
        let back = NetworkFile::parse(&f.to_toml()).unwrap();
        assert_eq!(back, f);
        let fam2 = back.require_family().unwrap();
        assert_eq!(fam2.base.spec, fam.base.spec);
        assert_eq!(fam2.b(), fam.b());
    }

    fn dist() -> impl Strategy<Value = DistributionModel> {
        prop_oneof![
            Just(DistributionModel::Exponential),
            Just(DistributionModel::Deterministic),
            (0.0..0.99f64).prop_map(|a| DistributionModel::uniform(a).unwrap()),
            (1u32..8).prop_map(|k| DistributionModel::erlang(k).unwrap()),
            (1.01..9.0f64).prop_map(|s| DistributionModel::hyperexp(s).unwrap()),
            (0.05..4.0f64).prop_map(|s| DistributionModel::lognormal(s).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn single_station_round_trip(lam in 0.01..0.99f64, m in 0.1..2.0f64, a in dist(), s in dist()) {
            let net = pilot::single_station(lam, m, a, s).unwrap();
            let f = NetworkFile::from_network(&net, None);
            let back = NetworkFile::parse(&f.to_toml()).unwrap();
            prop_assert_eq!(back.network().unwrap().spec, net.spec);
        }
    }
}
