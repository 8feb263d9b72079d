use crate::model::QAItem;

const EXCLUDED_ANSWERS: [&str; 2] = ["all of the above", "none of the above"];
const IMAGE_MARKER: &str = "[image]";

/// True when the item needs an image or has an "all/none of the above" candidate.
pub fn is_excluded(item: &QAItem) -> bool {
    let aggregate = item.candidates.iter().any(|c| {
        let c = c.trim().to_lowercase();
        EXCLUDED_ANSWERS.contains(&c.as_str())
    });
    let image = item.question.contains(IMAGE_MARKER)
        || item.candidates.iter().any(|c| c.contains(IMAGE_MARKER));
    aggregate || image
}

/// Keeps the questions answerable from text alone.
pub fn filter_domain_questions(items: Vec<QAItem>) -> Vec<QAItem> {
    items.into_iter().filter(|it| !is_excluded(it)).collect()
}
