//! Parsing CSV, whitespace-delimited text and Monash `.tsf` files.
//!
//! cargo run --example ingest_formats [path...]

use dvats::ingest::{parse_by_extension, parse_path, ParsedDataset};

const CSV: &str = "timestamp,power,temp\n\
2019-08-01 00:00:00,0.0,12.5\n\
2019-08-01 00:00:04,0.1,12.4\n\
2019-08-01 00:00:08,0.3,12.4\n";

const TXT: &str = "0   1.5  2.0\n1   1.7  2.1\n2   1.6  2.3\n";

const TSF: &str = "# Toy archive file\n\
@relation solar_toy\n\
@attribute series_name string\n\
@attribute start_timestamp date\n\
@frequency 4_seconds\n\
@missing true\n\
@equallength true\n\
@data\n\
T1:2019-08-01 00-00-00:0,0.5,1.2,?,2.0\n\
T2:2019-08-01 00-00-00:3,3.5,3.1,2.9,2.2\n";

fn describe(d: &ParsedDataset) {
    println!("{} ({:?}): {} series, {} values", d.name, d.source_format, d.series.len(), d.value_count());
    for s in &d.series {
        let names: Vec<&str> = s.channels().iter().map(|c| c.name.as_str()).collect();
        println!("  {:<8} rows={} channels={names:?} period={:?}s", s.name(), s.len(), s.frequency_seconds());
    }
    if let Some(h) = &d.tsf_header {
        println!("  header: frequency={:?} missing={} equallength={}", h.frequency, h.missing, h.equallength);
    }
}

fn main() {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    if !paths.is_empty() {
        for p in paths {
            match parse_path(std::path::Path::new(&p)) {
                Ok(d) => describe(&d),
                Err(e) => eprintln!("{p}: {e}"),
            }
        }
        return;
    }
    for (name, text) in [("meter.csv", CSV), ("bench.txt", TXT), ("solar_toy.tsf", TSF)] {
        describe(&parse_by_extension(name, text.as_bytes()).unwrap());
    }
    let err = parse_by_extension("bad.csv", b"t,v\n2,1\n1,2\n").unwrap_err();
    println!("non-monotone timestamps rejected: {err}");
}
