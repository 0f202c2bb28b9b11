use super::{Case, MetaKind, Segment, SentHints, Template, TemplateError};

pub fn parse_template(notation: &str) -> Result<Template, TemplateError> {
    if notation.trim().is_empty() {
        return Err(TemplateError::Empty);
    }
    let mut segments = Vec::new();
    let mut cls = false;
    let mut sep = false;
    let mut rest = notation;
    let mut offset = 0;

    while !rest.is_empty() {
        if let Some(body) = rest.strip_prefix('*') {
            let end = body.find('*').ok_or(TemplateError::Unterminated(offset))?;
            let token = &body[..end];
            match token {
                "cls" => cls = true,
                "sep" | "sep+" => sep = true,
                "mask" => segments.push(Segment::Mask),
                "dep" => segments.push(Segment::DepSlot),
                "od" => segments.push(Segment::Meta(MetaKind::Od)),
                "sd" => segments.push(Segment::Meta(MetaKind::Sd)),
                "td" => segments.push(Segment::Meta(MetaKind::Td)),
                _ => segments.push(parse_sentence(token)?),
            }
            offset += end + 2;
            rest = &body[end + 1..];
        } else {
            let end = rest.find('*').unwrap_or(rest.len());
            segments.push(Segment::Literal(rest[..end].replace('_', " ")));
            offset += end;
            rest = &rest[end..];
        }
    }

    // keep the mask a separate word
    for i in 1..segments.len() {
        if segments[i] == Segment::Mask {
            if let Segment::Literal(text) = &mut segments[i - 1] {
                if !text.ends_with(char::is_whitespace) {
                    text.push(' ');
                }
            }
        }
    }

    let masks = segments.iter().filter(|s| **s == Segment::Mask).count();
    let has_td = segments.contains(&Segment::Meta(MetaKind::Td));
    match masks {
        0 if !has_td => return Err(TemplateError::NoMask),
        0 | 1 => {}
        n => return Err(TemplateError::MultipleMasks(n)),
    }
    for (seg, name) in [
        (Segment::DepSlot, "*dep*"),
        (Segment::Meta(MetaKind::Od), "*od*"),
        (Segment::Meta(MetaKind::Sd), "*sd*"),
        (Segment::Meta(MetaKind::Td), "*td*"),
    ] {
        if segments.iter().filter(|s| **s == seg).count() > 1 {
            return Err(TemplateError::Duplicate(name));
        }
    }

    Ok(Template {
        segments,
        cls,
        sep,
        source: notation.to_string(),
    })
}

fn parse_sentence(token: &str) -> Result<Segment, TemplateError> {
    let unknown = || TemplateError::UnknownToken(token.to_string());
    let (space_before, body) = match token.strip_prefix('+') {
        Some(b) => (true, b),
        None => (false, token),
    };
    let body = body.strip_prefix("sent").ok_or_else(unknown)?;
    let (flags, index) = body.rsplit_once('_').ok_or_else(unknown)?;
    let mut hints = SentHints {
        space_before,
        first_char: if space_before { Case::Upper } else { Case::Keep },
        strip_punct: false,
    };
    for c in flags.chars() {
        match c {
            'l' => hints.first_char = Case::Lower,
            'u' => hints.first_char = Case::Upper,
            '-' => hints.strip_punct = true,
            _ => return Err(unknown()),
        }
    }
    match index {
        "0" => Ok(Segment::Sent0(hints)),
        "1" => Ok(Segment::Sent1(hints)),
        _ => Err(unknown()),
    }
}
