#pragma once

#include <stdexcept>
#include <string>

namespace yawdrive {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

#define YAWDRIVE_DEFINE_ERROR(NAME)                                     \
    class NAME : public Error                                           \
    {                                                                   \
      public:                                                           \
        explicit NAME(const std::string& what) : Error(#NAME ": " + what) {} \
    }

// world
YAWDRIVE_DEFINE_ERROR(InvalidAngle);
YAWDRIVE_DEFINE_ERROR(InvalidGrid);
YAWDRIVE_DEFINE_ERROR(SceneFormatError);
// simulate
YAWDRIVE_DEFINE_ERROR(InvalidAction);
YAWDRIVE_DEFINE_ERROR(EpisodeError);
// guidance
YAWDRIVE_DEFINE_ERROR(NoPath);
YAWDRIVE_DEFINE_ERROR(InvalidRoute);
YAWDRIVE_DEFINE_ERROR(DegenerateSegment);
// expert
YAWDRIVE_DEFINE_ERROR(DegenerateTarget);
// dataset
YAWDRIVE_DEFINE_ERROR(CollectionError);
YAWDRIVE_DEFINE_ERROR(FormatError);
YAWDRIVE_DEFINE_ERROR(CorruptData);
// autodiff / policy
YAWDRIVE_DEFINE_ERROR(ShapeError);
YAWDRIVE_DEFINE_ERROR(ConditioningError);
YAWDRIVE_DEFINE_ERROR(EmptyDataset);
// bench
YAWDRIVE_DEFINE_ERROR(WriteError);

#undef YAWDRIVE_DEFINE_ERROR

} // namespace yawdrive
