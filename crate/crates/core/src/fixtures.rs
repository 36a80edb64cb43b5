//! Small built-in datasets used by tests, examples and the CLI smoke path.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::ingest::{IngestOptions, SourceMeta, Table};
use crate::schema::{build_default_schema, DataSchema, Enrichment};

/// Eight Barcelona officials with salary, party, gender and age.
pub const OFFICIALS_CSV: &str = "\
first_name,last_name,salary,political_party,gender,age
Ada,Colau,130000,BComu,F,48
Jordi,Marti,95000,PSC,M,55
Laia,Bonet,121000,PSC,F,51
Joan,Subirats,88000,BComu,M,70
Elena,Ruiz,76000,PP,F,29
Marc,Serra,101000,BComu,M,41
Nuria,Pons,83000,ERC,F,34
Pau,Vidal,45000,ERC,M,27
";

/// Splits a CSV without quoting. Only meant for the fixtures above.
pub fn simple_csv(text: &str, source: SourceMeta) -> Table {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    Table::from_records(header, rows, source, &IngestOptions::default())
        .expect("fixture parses")
}

pub fn officials() -> Table {
    simple_csv(
        OFFICIALS_CSV,
        SourceMeta {
            origin: "officials.csv".to_string(),
            imported_at: None,
        },
    )
}

/// Edits a data owner would make to the officials schema: a full-name
/// composite, wordings for the gender and party values, and row names.
pub fn officials_enrichment() -> Vec<Enrichment> {
    let value = |field: &str, value: &str, synonym: &str| Enrichment::AddValueSynonym {
        field: field.to_string(),
        value: value.to_string(),
        synonym: synonym.to_string(),
    };
    let mut edits = alloc::vec![
        Enrichment::AddComposite {
            name: "full_name".to_string(),
            parts: alloc::vec!["first_name".to_string(), "last_name".to_string()],
            separator: None,
        },
        value("gender", "F", "women"),
        value("gender", "F", "woman"),
        value("gender", "F", "female"),
        value("gender", "M", "men"),
        value("gender", "M", "man"),
        value("gender", "M", "male"),
        value("political_party", "PP", "People's Party"),
        Enrichment::AddSynonym {
            field: "political_party".to_string(),
            locale: None,
            synonym: "party".to_string(),
        },
    ];
    for alias in ["officials", "people", "politicians"] {
        edits.push(Enrichment::AddRowAlias {
            locale: None,
            alias: alias.to_string(),
        });
    }
    edits
}

pub fn officials_schema() -> DataSchema {
    build_default_schema(&officials(), 10, "en")
}

pub fn officials_enriched_schema() -> DataSchema {
    officials_schema()
        .apply_all(&officials_enrichment())
        .expect("fixture edits apply")
}
