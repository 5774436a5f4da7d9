//! Reference learned codebooks for N = 8, used as regression fixtures.

use super::{Codebook, Provenance};
use crate::error::{Error, Result};

struct Fixture {
    id: &'static str,
    dimming: f64,
    rows: &'static [&'static str],
}

const FIXTURES: [Fixture; 4] = [
    Fixture {
        id: "IIa",
        dimming: 4.0,
        rows: &["01110111", "10000101", "01011000", "10101010"],
    },
    Fixture {
        id: "IIb",
        dimming: 2.5,
        rows: &[
            "10010001", "01010000", "01000011", "00011010", "00100001", "10100010", "11001000", "00000100",
        ],
    },
    Fixture {
        id: "IIc",
        dimming: 3.5,
        rows: &[
            "11001001", "10101010", "00010110", "00110000", "01000010", "00000101", "00011011", "01110011",
            "01101111", "10011100", "10100111", "01011000", "10000000", "01100100", "11010101", "00101001",
        ],
    },
    Fixture {
        id: "IId",
        dimming: 4.0,
        rows: &[
            "01011001", "00101011", "01111110", "00110000", "01000010", "00010111", "10011010", "11110011",
            "11001111", "00001100", "10100110", "11101000", "10000001", "01100101", "11010100", "10111101",
        ],
    },
];

pub fn fixture_ids() -> Vec<&'static str> {
    FIXTURES.iter().map(|f| f.id).collect()
}

/// Loads a fixture by id (`IIa`..`IId`, case-insensitive).
pub fn load_fixture(id: &str) -> Result<Codebook> {
    let fixture = FIXTURES
        .iter()
        .find(|f| f.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| Error::UnknownName {
            kind: "fixture",
            name: id.to_string(),
            known: fixture_ids().join(", "),
        })?;
    let words = fixture
        .rows
        .iter()
        .map(|row| row.bytes().map(|c| c - b'0').collect())
        .collect();
    Codebook::new(8, fixture.dimming, words, Provenance::Fixture)
}
