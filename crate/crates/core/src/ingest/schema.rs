//! Column registry for the human datasets.
//!
//! Each dataset id maps to a fixed set of logical columns. A logical column
//! may appear under any of several header spellings; matching is
//! case-insensitive. `docs/schemas.md` at the repository root describes the
//! layouts in prose.

use super::DatasetId;

#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
}

/// How the SI value is stored in a file.
#[derive(Debug, Clone, Copy)]
pub struct SiColumns {
    /// One pre-aggregated value per item.
    pub item_level: Column,
    /// One row per participant response; averaged per item at ingest.
    pub per_response: Column,
}

#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub id: DatasetId,
    /// `None` for the within-scale dataset, where the scale is fixed.
    pub weak: Option<Column>,
    pub strong: Option<Column>,
    pub pos: Option<Column>,
    pub context: Column,
    pub si: SiColumns,
    pub covariates: &'static [Column],
    pub weak_offset: Option<Column>,
}

const CONTEXT: Column = Column {
    name: "context",
    aliases: &["context", "sentence", "item_sentence"],
};

const WEAK: Column = Column {
    name: "weak",
    aliases: &["weak", "weak_scalemate", "weak_term"],
};

const STRONG: Column = Column {
    name: "strong",
    aliases: &["strong", "strong_scalemate", "strong_term"],
};

const POS: Column = Column {
    name: "pos",
    aliases: &["pos", "category", "part_of_speech"],
};

const CROSS_SI: SiColumns = SiColumns {
    item_level: Column {
        name: "si_rate",
        aliases: &["si_rate", "si", "proportion_yes"],
    },
    per_response: Column {
        name: "response",
        aliases: &["response", "answer"],
    },
};

pub const DEGEN_COVARIATES: &[Column] = &[
    Column {
        name: "partitive",
        aliases: &["partitive"],
    },
    Column {
        name: "strength",
        aliases: &["strength", "strengthsome"],
    },
    Column {
        name: "mention",
        aliases: &["mention", "linkedtoprevious"],
    },
    Column {
        name: "subjecthood",
        aliases: &["subjecthood", "subject"],
    },
    Column {
        name: "modification",
        aliases: &["modification", "modified"],
    },
    Column {
        name: "sentence_length",
        aliases: &["sentence_length", "sentencelength"],
    },
];

const DEGEN: Schema = Schema {
    id: DatasetId::Degen2015,
    weak: None,
    strong: None,
    pos: None,
    context: CONTEXT,
    si: SiColumns {
        item_level: Column {
            name: "mean_rating",
            aliases: &["mean_rating", "mean_response"],
        },
        per_response: Column {
            name: "rating",
            aliases: &["rating", "response"],
        },
    },
    covariates: DEGEN_COVARIATES,
    weak_offset: Some(Column {
        name: "some_offset",
        aliases: &["some_offset", "weak_offset"],
    }),
};

const fn cross(id: DatasetId) -> Schema {
    Schema {
        id,
        weak: Some(WEAK),
        strong: Some(STRONG),
        pos: Some(POS),
        context: CONTEXT,
        si: CROSS_SI,
        covariates: &[],
        weak_offset: None,
    }
}

pub fn schema_for(id: DatasetId) -> Option<Schema> {
    match id {
        DatasetId::Degen2015 => Some(DEGEN),
        DatasetId::VanTiel2016 | DatasetId::Gotzner2018 | DatasetId::Pankratz2021 | DatasetId::Ronai2022 => {
            Some(cross(id))
        }
        DatasetId::Ronai2022Cloze => None,
    }
}

pub const CLOZE_COLUMNS: [Column; 3] = [
    WEAK,
    STRONG,
    Column {
        name: "accessibility",
        aliases: &["accessibility", "cloze", "cloze_proportion"],
    },
];

/// Resolves a logical column against a header row.
pub fn find(headers: &[String], column: &Column) -> Option<usize> {
    headers.iter().position(|h| {
        let h = h.trim().to_ascii_lowercase();
        column.aliases.iter().any(|a| *a == h)
    })
}
