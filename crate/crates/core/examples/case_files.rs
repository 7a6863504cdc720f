//! Loading, checking and writing case files.

use gridclear::scenario::{bundled_source, parse_case, CaseFile, LoadError};

pub fn run_example() -> Result<Vec<String>, Box<dyn std::error::Error>> {
    let text = bundled_source("ring4").ok_or("ring4 is bundled")?;
    let case = parse_case(text)?;
    println!(
        "{}: {} buses, {} lines, TransCos {:?}",
        case.name,
        case.network.bus_count(),
        case.network.lines().len(),
        case.transcos.iter().map(|t| t.id()).collect::<Vec<_>>()
    );

    // give the second TransCo a line the first one already owns
    let mut raw: serde_json::Value = serde_json::from_str(text)?;
    raw["transcos"][1]["lines"]
        .as_array_mut()
        .ok_or("lines array")?
        .push(serde_json::json!([0, 1]));
    let codes = match parse_case(&raw.to_string()) {
        Err(LoadError::Invalid(issues)) => {
            for i in &issues {
                println!("rejected: {i}");
            }
            issues.into_iter().map(|i| i.code).collect()
        }
        other => return Err(format!("expected a validation error, got {other:?}").into()),
    };

    let written = CaseFile::from_case(&case).to_json();
    let again = parse_case(&written)?;
    println!(
        "written case reloads identically: {}",
        CaseFile::from_case(&again).to_json() == written
    );
    Ok(codes)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
