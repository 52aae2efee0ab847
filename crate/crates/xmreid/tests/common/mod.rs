#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xmreid::dataio::{self, CorpusRecord};
use xmreid_core::dataset::View;
use xmreid_core::rng::{CounterRng, RngExt};
use xmreid_core::textprep::EmbeddingTable;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_xmreid"))
}

pub fn xmreid<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub const VOCAB: &[&str] = &[
    "man", "woman", "wearing", "red", "blue", "green", "black", "white", "shirt", "jacket", "jeans", "skirt", "bag",
    "backpack", "hat", "shoes", "long", "short", "hair", "carrying", "tall", "young", "old", "glasses", "spectacles",
];

/// Ten identities, two views, two descriptions per view; half mention glasses.
pub fn write_text_fixture(dir: &Path) {
    let mut rng = CounterRng::new(7);
    let mut table = EmbeddingTable::new(8);
    for w in VOCAB {
        table.insert(*w, (0..8).map(|_| rng.normal()).collect()).unwrap();
    }
    dataio::write_text(&dir.join("emb.txt"), &dataio::write_embeddings(&table)).unwrap();
    let plain = &VOCAB[..VOCAB.len() - 2];
    let mut records = Vec::new();
    for i in 0..10 {
        let base: Vec<&str> = (0..5).map(|_| plain[rng.below(plain.len())]).collect();
        for view in [View::One, View::Two] {
            for k in 0..2 {
                let mut words = base.clone();
                rng.shuffle(&mut words);
                if (i + k) % 2 == 0 {
                    let at = rng.below(words.len() + 1);
                    words.insert(at, if rng.below(2) == 0 { "glasses" } else { "spectacles" });
                }
                records.push(CorpusRecord { identity: format!("id{i:04}"), view, text: format!("The {}.", words.join(" ")) });
            }
        }
    }
    dataio::write_text(&dir.join("corpus.txt"), &dataio::write_corpus(&records)).unwrap();
    dataio::write_text(&dir.join("syn.txt"), "glasses\tspectacles,eyewear\nred\tcrimson\nman\tguy,male\n").unwrap();
}

/// Small synthetic dataset config for quick CLI runs.
pub const SMALL_CONFIG: &str = "preset = \"scenario\"\nidentities = 24\nsplits = 3\n";

pub fn s(p: &Path) -> String {
    p.display().to_string()
}
