#pragma once

#include "errors.hpp"

#include <map>
#include <string>
#include <string_view>

// Bundled prompt texts. Configs refer to them as "asset:<name>".
namespace teamline::assets {

inline constexpr std::string_view kTicTacToeTask = R"txt(You are tasked with developing a text-based Tic-Tac-Toe game. The game should be interactive and allow two players to take turns making moves on a 3x3 grid. The code should be in the Java programming language. Make sure that the code compiles. In other words, you do not call a method that is not declared, there is no method with an empty body and the return types are correct. Each player is represented by a symbol ('X' or 'O'). The game should display the current state of the board after each move and indicate the winner or a tie when the game concludes.

Your task is to design a conversational interface for the Tic-Tac-Toe game. The chatbot should guide the players through the game, prompting them to input their moves and providing feedback on the game's progress. Consider the following aspects in your response:

- Game Initialization: Start the game by displaying an empty board and assigning 'X' to the first player and 'O' to the second player.

- Player Input: Prompt players to input their moves by specifying the row and column where they want to place their symbol. Ensure that the input is validated to prevent invalid moves. Keep in mind that a user can type anything as input. It is your responsibility to validate it.

- Game Progress: After each move, display the updated board. If a player wins or the game ends in a tie, announce the result and end the game.

- Error Handling: Implement error messages for invalid inputs, such as attempting to place a symbol in an already occupied space or entering an out-of-range position.

- Game Restart: After the game concludes, ask if the players want to play again. If they do, reset the board and start a new game. If not, bid farewell.

Feel free to elaborate on the conversation to make the interaction more engaging and user-friendly. Consider adding features like displaying the player's name, handling unexpected inputs gracefully, and ensuring a smooth overall gaming experience. Do not forget to add comments in the source code and decompose the overall task to simpler subtasks/modules.)txt";

inline constexpr std::string_view kPersonaCeo = R"txt(You are the CEO of a development firm that creates software for a client, who will provide their requirements, and can answer clarifying questions. Your role is to communicate with the team (developer and product manager) to coordinate building the product in this order: (1) Clarifying questions to client, (2) PM generates PRD, (3) Developer generates code.)txt";

inline constexpr std::string_view kPersonaProductManager = R"txt(You are a professional product manager. Your role is to design a concise, usable, efficient product. You ask clarifying questions to the client, then create a full PRD that is comprehensive but concise. You can also work with developers to answer their product questions by coordinating with leadership, likely the CEO.)txt";

inline constexpr std::string_view kPersonaDeveloper = R"txt(You are a professional developer. Your role is to build modular and easy to read and maintain code. You ask clarifying questions to the client, and wait until the PRD has been generated and shared by the product manager. Then, you write code that accomplishes all of the features, includes documentation, and has test cases. You will write code to Slack.)txt";

inline constexpr std::string_view kKnowledgeControl = R"txt(In our software team, the CEO coordinates the timeline for each project. The product manager and developers do not start work until it has been approved by the CEO. Once that occurs, the product manager first creates and shares a PRD with the team. Development does not start until this PRD is approved by the CEO. Then, the software with test cases is developed. It is important for all code to have strong documentation through inline comments.)txt";

/// `{description}` is replaced by the condition's collaborative move.
inline constexpr std::string_view kKnowledgeTemplate =
    "Use the following collaborative move when interacting with others in the team, as appropriate: {description}.";

inline constexpr std::string_view kIpaLabelingPrompt = R"txt(Analyze the following message in the context of a collaboration dialogue and categorize it into one of the following categories.

1. Shows Solidarity: raises other's status, gives help, reward.
2. Shows Tension Release: jokes, laughs, shows satisfaction.
3. Agrees: shows passive acceptance, understands, concurs, complies.
4. Gives Suggestion: direction, implying autonomy for other.
5. Gives Opinion: evaluation, analysis, expresses feeling, wish.
6. Gives Orientation: information, repeats, clarifies, confirms.
7. Asks for Orientation: information, repetition, confirmation.
8. Asks for Opinion: evaluation, analysis, expression of feeling.
9. Asks for Suggestion: direction, possible ways of action.
10. Disagrees: shows passive rejection, formality, withholds help.
11. Shows Tension: asks for help, withdraws out of field.
12. Shows Antagonism: deflates other's status, defends or asserts self.

If none of the above categories apply, respond with category 13, which is "13. None of the Above".

Respond with ONLY the category number (1-13) that best represents the message. Do not include any other text or explanation.)txt";

inline const std::map<std::string, std::string_view>& registry() {
    static const std::map<std::string, std::string_view> table = {
        {"tictactoe_task", kTicTacToeTask},
        {"persona_ceo", kPersonaCeo},
        {"persona_product_manager", kPersonaProductManager},
        {"persona_developer", kPersonaDeveloper},
        {"knowledge_control", kKnowledgeControl},
        {"knowledge_template", kKnowledgeTemplate},
        {"ipa_labeling_prompt", kIpaLabelingPrompt},
    };
    return table;
}

inline constexpr std::string_view kAssetPrefix = "asset:";

/// Returns the named asset for "asset:<name>" strings and the text itself otherwise.
inline std::string resolve(const std::string& text) {
    if (text.rfind(kAssetPrefix, 0) != 0) return text;
    const auto name = text.substr(kAssetPrefix.size());
    const auto& table = registry();
    auto it = table.find(name);
    if (it == table.end()) throw ConfigError("unknown asset '" + name + "'");
    return std::string(it->second);
}

} // namespace teamline::assets
