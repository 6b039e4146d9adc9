//! Identifier naming conventions.

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NamingStyle {
    Pascal,
    Camel,
    Snake,
    UnderscoreInit,
    AllCaps,
}

impl NamingStyle {
    pub const ALL: [NamingStyle; 5] = [
        NamingStyle::Pascal,
        NamingStyle::Camel,
        NamingStyle::Snake,
        NamingStyle::UnderscoreInit,
        NamingStyle::AllCaps,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            NamingStyle::Pascal => "PascalCase",
            NamingStyle::Camel => "camelCase",
            NamingStyle::Snake => "snake_case",
            NamingStyle::UnderscoreInit => "_underscore_init",
            NamingStyle::AllCaps => "ALL_CAPS",
        }
    }
}

fn snake_words(s: &str) -> Option<Vec<String>> {
    if s.is_empty() || !s.starts_with(|c: char| c.is_ascii_lowercase()) {
        return None;
    }
    if s.chars().any(|c| c.is_ascii_uppercase()) {
        return None;
    }
    let words: Vec<String> = s.split('_').map(str::to_string).collect();
    if words.iter().any(|w| w.is_empty()) {
        return None;
    }
    Some(words)
}

fn split_humps(s: &str) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for c in s.chars() {
        if c.is_ascii_uppercase() || words.is_empty() {
            words.push(c.to_ascii_lowercase().to_string());
        } else {
            words.last_mut().unwrap().push(c);
        }
    }
    words
}

/// Determine the style of an identifier and its lowercase words.
pub fn classify(name: &str) -> Option<(NamingStyle, Vec<String>)> {
    if !name.is_ascii() || name.is_empty() {
        return None;
    }
    if let Some(rest) = name.strip_prefix('_') {
        return snake_words(rest).map(|w| (NamingStyle::UnderscoreInit, w));
    }
    let first = name.chars().next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    let has_lower = name.chars().any(|c| c.is_ascii_lowercase());
    let has_upper = name.chars().any(|c| c.is_ascii_uppercase());
    if !has_lower {
        let words: Vec<String> = name.split('_').map(|w| w.to_ascii_lowercase()).collect();
        if words.iter().any(|w| w.is_empty()) {
            return None;
        }
        return Some((NamingStyle::AllCaps, words));
    }
    if name.contains('_') {
        return snake_words(name).map(|w| (NamingStyle::Snake, w));
    }
    if first.is_ascii_uppercase() {
        return Some((NamingStyle::Pascal, split_humps(name)));
    }
    if has_upper {
        return Some((NamingStyle::Camel, split_humps(name)));
    }
    Some((NamingStyle::Snake, vec![name.to_string()]))
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

pub fn render_style(words: &[String], style: NamingStyle) -> String {
    match style {
        NamingStyle::Pascal => words.iter().map(|w| capitalize(w)).collect(),
        NamingStyle::Camel => words
            .iter()
            .enumerate()
            .map(|(i, w)| if i == 0 { w.clone() } else { capitalize(w) })
            .collect(),
        NamingStyle::Snake => words.join("_"),
        NamingStyle::UnderscoreInit => format!("_{}", words.join("_")),
        NamingStyle::AllCaps => words
            .iter()
            .map(|w| w.to_ascii_uppercase())
            .collect::<Vec<_>>()
            .join("_"),
    }
}

/// Restyle `name` if the result reads back as the same words in the target
/// style.
pub fn restyle(name: &str, style: NamingStyle) -> Option<String> {
    let (_, words) = classify(name)?;
    let out = render_style(&words, style);
    match classify(&out) {
        Some((s, w)) if s == style && w == words => Some(out),
        _ => None,
    }
}

/// Current style of `name`, provided the name is exactly reproducible from
/// its words.
pub fn stable_style(name: &str) -> Option<NamingStyle> {
    let (style, words) = classify(name)?;
    (render_style(&words, style) == name).then_some(style)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_table_examples() {
        assert_eq!(
            classify("myVariable"),
            Some((NamingStyle::Camel, vec!["my".into(), "variable".into()]))
        );
        assert_eq!(
            classify("my_variable"),
            Some((NamingStyle::Snake, vec!["my".into(), "variable".into()]))
        );
        assert_eq!(classify("MyVariable").unwrap().0, NamingStyle::Pascal);
        assert_eq!(classify("_my_variable").unwrap().0, NamingStyle::UnderscoreInit);
        assert_eq!(classify("MY_VARIABLE").unwrap().0, NamingStyle::AllCaps);
        assert_eq!(classify("__x"), None);
        assert_eq!(classify("my__var"), None);
    }

    #[test]
    fn restyle_all() {
        let n = "my_variable";
        assert_eq!(restyle(n, NamingStyle::Pascal).unwrap(), "MyVariable");
        assert_eq!(restyle(n, NamingStyle::Camel).unwrap(), "myVariable");
        assert_eq!(restyle(n, NamingStyle::UnderscoreInit).unwrap(), "_my_variable");
        assert_eq!(restyle(n, NamingStyle::AllCaps).unwrap(), "MY_VARIABLE");
        assert_eq!(restyle("MY_VARIABLE", NamingStyle::Snake).unwrap(), n);
    }

    #[test]
    fn single_words_lose_ambiguous_styles() {
        assert_eq!(restyle("total", NamingStyle::Camel), None);
        assert_eq!(restyle("i", NamingStyle::Pascal), None);
        assert_eq!(restyle("i", NamingStyle::AllCaps).unwrap(), "I");
    }

    #[test]
    fn digits_stay_attached() {
        assert_eq!(restyle("arr2", NamingStyle::Pascal).unwrap(), "Arr2");
        assert_eq!(restyle("x_1", NamingStyle::Camel), None);
    }
}
