#pragma once

#include <stdexcept>
#include <string>

namespace teamline {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define TEAMLINE_DEFINE_ERROR(Name)          \
    class Name : public Error {              \
    public:                                  \
        using Error::Error;                  \
    }

// timeline
TEAMLINE_DEFINE_ERROR(UnknownAuthor);
TEAMLINE_DEFINE_ERROR(EmptyMessage);
TEAMLINE_DEFINE_ERROR(EmptyFilename);
TEAMLINE_DEFINE_ERROR(DuplicateFilename);
TEAMLINE_DEFINE_ERROR(CursorBeyondHead);

// provider
TEAMLINE_DEFINE_ERROR(ProviderUnavailable);
TEAMLINE_DEFINE_ERROR(ScriptExhausted);
TEAMLINE_DEFINE_ERROR(MalformedResponse);
TEAMLINE_DEFINE_ERROR(MissingCredentials);

// session
TEAMLINE_DEFINE_ERROR(ConfigError);
TEAMLINE_DEFINE_ERROR(DuplicateName);
TEAMLINE_DEFINE_ERROR(SessionEnded);
TEAMLINE_DEFINE_ERROR(Deadlock);
TEAMLINE_DEFINE_ERROR(UnknownParticipant);
TEAMLINE_DEFINE_ERROR(NotHuman);

// coding
TEAMLINE_DEFINE_ERROR(LengthMismatch);
TEAMLINE_DEFINE_ERROR(InvalidCategory);

// checklist
TEAMLINE_DEFINE_ERROR(MissingCriterion);
TEAMLINE_DEFINE_ERROR(UnknownCriterion);
TEAMLINE_DEFINE_ERROR(UnknownMark);
TEAMLINE_DEFINE_ERROR(RubricMismatch);

// parsing of input files (csv, json documents)
TEAMLINE_DEFINE_ERROR(ParseError);

#undef TEAMLINE_DEFINE_ERROR

} // namespace teamline
