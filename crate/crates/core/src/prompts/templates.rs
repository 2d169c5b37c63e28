// Template bodies. Slots are written `{statement}`, `{question}`, `{context}`
// and `{article}`; nothing else in a body uses braces.

pub(super) const GENERIC_QUESTION: &str = "This is a conversation between a user and a question-answering bot.
User: Initial Question: {statement}
Bot: To answer this question, I need to ask the following clarifying question:";

pub(super) const KEYWORD_PAIR: &str = "This is a conversation between a user and a question-answering bot. The bot has to limit its response to 2 words, one noun and one adjective to name the necessary detail.
User: Evaluate the truthfulness of this statement: {statement}
Bot: To evaluate the truthfulness, I need the following detail";

pub(super) const CATEGORY_QUESTION: &str = "Classify the missing information in the statement by asking a clarifying question and assigning it to the correct category, where applicable. Use the letter associated with each category:

A: Speaker or person mentioned but not identified
B: Location mentioned but not specified
C: Textual evidence, information, or object mentioned but not specified
E: Visual or audio evidence specifically mentioned in the statement
F: Providing the date for the statement
G: Other (not related to any of the categories above)
Note: Categorize based on the most critical information missing.

Examples for reference:

A: \"A nurse claims COVID is a hoax.\" - Which nurse are you referring to?
B: \"Wages have gone up faster than inflation.\" - Which country are you referring to in regards to this statement?
C: \"The vaccine has shown to have negative effects.\" - Which vaccine are you referring to?
E: \"An image shows a map of Iran.\" - Can you provide the image you're referring to?
F: \"New York has the lowest crime rate in the country.\" - Can you provide the date when this statement was made? (Not related to categories above)
E: \"A scientist says the image shows a country's inflation grow over time.\" - Can you provide the image you're referring to? (In this case, the image will provide the most information.)
Given Statement: {statement}

Task: Formulate the clarifying question and identify the category or categories by their respective letters, separated by a vertical bar. End your response with the category letter or letters.";

pub(super) const ROUTE_DECISION: &str = "Consider the following statement: {statement}, and a question regarding that statement: {question}. Your task is to decide the most suitable approach for answering the question based on two options: querying the user or conducting a web search.

The user possesses the following information related to the statement, only if it is relevant for understanding the statement:

Speaker or person mentioned but not specified (pronouns)
Vague location (state, country, city, school)
Date of the statement (year, time period, day, week)
Extremely vague/unspecified subjects (unspecified type of medicine, law, program)
Any non-textual evidence is not recoverable (image, video, audio)
A web search can provide an answer to the question if it is likely to retrieve context about the statement online.

Example: 'Muslim figure: We must have pork-free menus or we will leave U.S.' - We cannot identify the figure by conducting a web search.
Example 'The US passed a law that cuts taxes for the poor in 2021' - We do not know what the law is, but we are likely to find information via web search.

Task: Determine whether a user query or web search is better suited for answering the question. Respond with a 'U' for user query, and 'W' for web retrieval. Only select 'U' for the user if it's unlikely that the statement can be retrieved from the web.";

macro_rules! rate_opening {
    () => {
        "Rate the truthfulness of the following statement: {statement}."
    };
}
macro_rules! rate_instruction {
    () => {
        "Please rate the statement's truthfulness on a scale from 0 to 1, where 0 signifies 'False' and 1 signifies 'True'. If uncertain or lacking context, use 0.5. Do not make assumptions or provide explanations; respond with a number."
    };
}
macro_rules! qa_context {
    () => {
        "The following context from a user may be provided: Question: {question}, Answer: {context}."
    };
}
macro_rules! block_context {
    () => {
        "The following context from a user may be provided: {context}."
    };
}
macro_rules! disabled_suffix {
    () => {
        "Respond with 0 or 1 to your best ability; do not provide any other responses. Do not make assumptions or provide explanations; only respond with a number."
    };
}

pub(super) const VERACITY_ENABLED: &str = concat!(rate_opening!(), " ", rate_instruction!());
pub(super) const VERACITY_ENABLED_QA: &str =
    concat!(rate_opening!(), " ", qa_context!(), " ", rate_instruction!());
pub(super) const VERACITY_ENABLED_BLOCK: &str =
    concat!(rate_opening!(), " ", block_context!(), " ", rate_instruction!());
pub(super) const VERACITY_DISABLED: &str =
    concat!(rate_opening!(), " ", rate_instruction!(), " ", disabled_suffix!());
pub(super) const VERACITY_DISABLED_QA: &str = concat!(
    rate_opening!(),
    " ",
    qa_context!(),
    " ",
    rate_instruction!(),
    " ",
    disabled_suffix!()
);
pub(super) const VERACITY_DISABLED_BLOCK: &str = concat!(
    rate_opening!(),
    " ",
    block_context!(),
    " ",
    rate_instruction!(),
    " ",
    disabled_suffix!()
);

pub(super) const SIMULATED_USER: &str = "You are the person who shared the statement below, and you are answering a clarifying question about it. Your knowledge comes from the fact-check article that follows; treat it as your own background knowledge.

You can provide the following information related to the statement, only if it is relevant for understanding the statement:
Speaker or person mentioned but not specified (pronouns)
Vague location (state, country, city, school)
Date of the statement (year, time period, day, week)
Extremely vague/unspecified subjects (unspecified type of medicine, law, program)
Any non-textual evidence is not recoverable (image, video, audio)

Statement: {statement}
Clarifying question: {question}
Article: {article}

Answer the question directly, only providing information in accordance with the previously outlined guidelines. Do not say whether the statement is true or false. If the article does not contain the requested information, respond with \"I cannot provide this information.\"";

pub(super) const FILL_BLANK_EXTRACT: &str = "Read the fact-check article below and fill in the context a user would know about the statement. Do not say whether the statement is true or false.

Statement to fill in: {statement}
Article: {article}

Respond with exactly the four lines below, completing each one from the article. If the article does not support a line, complete it with \"I cannot provide this information.\"
Name of speaker or person referred to in the statement (if relevant):
Location referred to in the statement (if relevant):
Date including year or time period referred to in the statement (if relevant):
Vague or unspecified subject referred to in the statement (if relevant):";
