#![allow(dead_code)]

use std::path::PathBuf;

use isec::{CostConfig, HashEmbedder, Taxonomy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ABBREVIATIONS: [&str; 5] = ["caba", "cba", "pba", "gba", "ba"];

/// Argentine jurisdiction names plus two common long forms, with counts
/// shaped like a national legal-aid intake log (~1M rows, abbreviations ~6%).
pub const PROVINCES: [(&str, u64); 25] = [
    ("buenos aires", 212_000),
    ("ciudad autonoma de buenos aires", 118_000),
    ("capital federal", 41_000),
    ("catamarca", 14_500),
    ("chaco", 38_200),
    ("chubut", 17_900),
    ("cordoba", 96_400),
    ("corrientes", 31_800),
    ("entre rios", 35_600),
    ("formosa", 16_300),
    ("jujuy", 22_700),
    ("la pampa", 9_800),
    ("la rioja", 11_200),
    ("mendoza", 52_300),
    ("misiones", 29_900),
    ("neuquen", 18_600),
    ("rio negro", 21_400),
    ("salta", 39_700),
    ("san juan", 19_800),
    ("san luis", 13_100),
    ("santa cruz", 8_700),
    ("santa fe", 71_200),
    ("santiago del estero", 27_400),
    ("tierra del fuego", 6_900),
    ("tucuman", 44_100),
];

pub const ABBREVIATION_COUNTS: [(&str, u64); 5] = [
    ("caba", 21_300),
    ("cba", 14_200),
    ("pba", 9_100),
    ("gba", 6_800),
    ("ba", 5_400),
];

pub fn case1_entries() -> Vec<(String, u64)> {
    PROVINCES
        .iter()
        .chain(ABBREVIATION_COUNTS.iter())
        .map(|(l, f)| (l.to_string(), *f))
        .collect()
}

pub fn case1_taxonomy() -> Taxonomy {
    Taxonomy::embed(case1_entries(), &HashEmbedder::default()).unwrap()
}

/// Unit costs with the penalty and exponent of the bundled demo.
pub fn case1_config() -> CostConfig {
    CostConfig::new(1.0, 1.0, 0.4, true).unwrap()
}

pub fn case1_csv() -> String {
    let mut s = String::from("provincia,n\n");
    for (l, f) in case1_entries() {
        s.push_str(&format!("{l},{f}\n"));
    }
    s
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn iso_config() -> CostConfig {
    CostConfig::load(data_path("iso1832_qwerty.json")).unwrap()
}

/// Catalogue codes: four letters followed by a six-digit date stamp.
pub fn iso_codes(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < n {
        let letters: String = (0..4).map(|_| char::from(b'A' + rng.gen_range(0..26u8))).collect();
        let code = format!(
            "{letters}{:02}{:02}{:02}",
            rng.gen_range(0..100),
            rng.gen_range(1..13),
            rng.gen_range(1..29)
        );
        seen.insert(code);
    }
    seen.into_iter().collect()
}

/// `n` codes including the transposed pair.
pub fn case3_codes(n: usize) -> Vec<String> {
    let mut codes: Vec<String> = iso_codes(n, 1832)
        .into_iter()
        .filter(|c| c != "AAGX110216" && c != "AGAX110216")
        .take(n - 2)
        .collect();
    codes.push("AAGX110216".into());
    codes.push("AGAX110216".into());
    codes
}

pub fn random_labels(n: usize, seed: u64, alphabet: &[u8], max_len: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < n {
        let len = rng.gen_range(1..=max_len);
        let s: String = (0..len)
            .map(|_| char::from(alphabet[rng.gen_range(0..alphabet.len())]))
            .collect();
        seen.insert(s);
    }
    seen.into_iter().collect()
}

pub fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<isec::EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            // Box-Muller gaussian components give isotropic directions
            let mut v: Vec<f64> = (0..dim)
                .map(|_| {
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen();
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            isec::EmbeddingVector::new(v)
        })
        .collect()
}

/// Textbook restricted Damerau-Levenshtein with unit costs.
pub fn osa_reference(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d[i][j] = d[i][j].min(d[i - 2][j - 2] + 1);
            }
        }
    }
    d[n][m]
}

/// Brute-force cosine k-NN, ties broken by id.
pub fn exact_knn(vectors: &[isec::EmbeddingVector], q: usize, k: usize) -> Vec<usize> {
    let dot = |a: &isec::EmbeddingVector, b: &isec::EmbeddingVector| -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() / (a.norm() * b.norm())
    };
    let mut all: Vec<(f64, usize)> = (0..vectors.len())
        .filter(|&i| i != q)
        .map(|i| (dot(&vectors[q], &vectors[i]), i))
        .collect();
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn multipart(fields: &[(&str, &str)], file: Option<(&str, &[u8])>) -> (String, Vec<u8>) {
    let boundary = "----isec-test-boundary";
    let mut body = Vec::new();
    for (name, value) in fields {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes(),
        );
    }
    if let Some((filename, data)) = file {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{filename}\"\r\nContent-Type: text/csv\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}
